#pragma once

// Shoebox room impulse responses by the image method, plus convolution
// helpers and a moving-source renderer.

#include <array>
#include <vector>

namespace sca_aec {

inline constexpr double kSpeedOfSound = 343.0;
inline constexpr std::size_t kSincTaps = 81;

using Vec3 = std::array<double, 3>;

struct RoomSpec {
  Vec3 dims{5.0, 4.0, 3.0};
  Vec3 source{1.0, 1.0, 1.5};
  Vec3 mic{3.0, 2.5, 1.2};
  // Wall reflection coefficients: x=0, x=Lx, y=0, y=Ly, z=0, z=Lz.
  std::array<double, 6> beta{0, 0, 0, 0, 0, 0};
  double rt60_s = 0.3;  // sets the response length (rt60 + 100 ms)
  int max_order = -1;   // reflections per axis; -1 keeps every image inside the length
  double sample_rate = 48000.0;
  // Second-order Butterworth high-pass applied to the summed response. The
  // all-positive image sum carries a low-frequency build-up that otherwise
  // lengthens the decay; 0 disables the filter.
  double highpass_hz = 50.0;

  void Validate() const;
  std::size_t length() const;
};

// kSabine and kEyring invert the classical diffuse-field formulas. Shoebox
// image responses decay slower than those predict (axial and tangential paths
// reflect less often), so kShoeboxFit instead solves for the coefficient whose
// direction-averaged image decay curve has the target T20 estimate.
enum class AbsorptionModel { kSabine, kEyring, kShoeboxFit };

// Uniform reflection coefficient giving `rt60_s` in a room of `dims`.
double ReflectionForRt60(const Vec3& dims, double rt60_s,
                         AbsorptionModel model = AbsorptionModel::kShoeboxFit);
// Room with all six walls set from the target RT60. Each refinement pass
// renders the response, measures its Schroeder RT60 and rescales log(beta)
// by measured / target.
RoomSpec MakeRoom(const Vec3& dims, const Vec3& source, const Vec3& mic, double rt60_s,
                  AbsorptionModel model = AbsorptionModel::kShoeboxFit, int refine = 0);

std::vector<double> ImageMethodRir(const RoomSpec& room);

// In-place biquad high-pass (Butterworth, Q = 1/sqrt(2)).
void HighPass(std::vector<double>& x, double cutoff_hz, double sample_rate);

// Adds amp * windowed-sinc(n - delay) into h (taps outside h are dropped).
void AddFractionalImpulse(std::vector<double>& h, double delay, double amp);

// Reverberation time from Schroeder backward integration, line fit between
// -5 dB and -25 dB of the decay curve, extrapolated to -60 dB.
double SchroederRt60(const std::vector<double>& h, double sample_rate = 48000.0);

// Full linear convolution, length x + h - 1. Direct for short operands,
// FFT otherwise.
std::vector<double> Convolve(const std::vector<double>& x, const std::vector<double>& h);

// Moving source: positions linearly interpolated over blocks of block_s;
// consecutive blocks with identical responses are merged and neighbouring
// segments crossfaded with ramp_s equal-power ramps centred on the boundary.
struct SourceMotion {
  Vec3 start;
  Vec3 end;
};

struct TimeVariantRir {
  double block_s = 0.1;
  double ramp_s = 0.01;
  std::size_t block_len(double fs) const;
};

// One response per block for a signal of n samples.
std::vector<std::vector<double>> BlockRirs(const RoomSpec& room, const SourceMotion& motion,
                                           std::size_t n, const TimeVariantRir& tv = {});
// Renders x through per-block responses; output length x.size().
std::vector<double> RenderTimeVariant(const std::vector<double>& x,
                                      const std::vector<std::vector<double>>& rirs,
                                      std::size_t block_len, std::size_t ramp_len);

}  // namespace sca_aec
