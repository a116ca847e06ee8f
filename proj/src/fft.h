#pragma once

// Real-input FFT on top of FFTW. Plans are created once per (thread, length)
// with FFTW_ESTIMATE, so results are deterministic and identical across
// threads. Plan creation is serialized because the FFTW planner is not
// reentrant.

#include <cstddef>

namespace sca_aec::fft {

// Forward r2c: `in` has n reals, `re`/`im` receive n/2+1 bins.
void Forward(const double* in, std::size_t n, double* re, double* im);

// Unnormalized inverse c2r: `out` receives n reals. Imaginary parts of the DC
// and (even n) Nyquist bins are ignored.
void Inverse(const double* re, const double* im, std::size_t n, double* out);

}  // namespace sca_aec::fft
