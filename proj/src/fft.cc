#include "fft.h"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>

namespace sca_aec::fft {
namespace {

std::mutex& PlannerMutex() {
  static std::mutex m;
  return m;
}

struct Workspace {
  explicit Workspace(std::size_t n) : n(n) {
    real = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    spec = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    std::lock_guard<std::mutex> lock(PlannerMutex());
    r2c = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
    c2r = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
  }
  ~Workspace() {
    {
      std::lock_guard<std::mutex> lock(PlannerMutex());
      fftw_destroy_plan(r2c);
      fftw_destroy_plan(c2r);
    }
    fftw_free(real);
    fftw_free(spec);
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  std::size_t n;
  double* real;
  fftw_complex* spec;
  fftw_plan r2c;
  fftw_plan c2r;
};

Workspace& Get(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<Workspace>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Workspace>(n);
  return *slot;
}

}  // namespace

void Forward(const double* in, std::size_t n, double* re, double* im) {
  Workspace& w = Get(n);
  for (std::size_t i = 0; i < n; ++i) w.real[i] = in[i];
  fftw_execute(w.r2c);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    re[k] = w.spec[k][0];
    im[k] = w.spec[k][1];
  }
}

void Inverse(const double* re, const double* im, std::size_t n, double* out) {
  Workspace& w = Get(n);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    w.spec[k][0] = re[k];
    w.spec[k][1] = im[k];
  }
  // c2r destroys its input; the workspace copy absorbs that.
  fftw_execute(w.c2r);
  for (std::size_t i = 0; i < n; ++i) out[i] = w.real[i];
}

}  // namespace sca_aec::fft
