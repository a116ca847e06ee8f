#include "sca_aec/synth.h"

#include <array>
#include <cmath>

namespace sca_aec {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFs = 48000.0;

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void Normalize(std::vector<double>& x, double rms) {
  double e = 0.0;
  for (double v : x) e += v * v;
  const double scale = rms / (std::sqrt(e / std::max<std::size_t>(1, x.size())) + 1e-9);
  for (double& v : x) v *= scale;
}

}  // namespace

std::vector<double> SynthSpeech(std::mt19937_64& rng, std::size_t n, double rms) {
  std::vector<double> out(n, 0.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t t = 0;
  while (t < n) {
    t += static_cast<std::size_t>(Uniform(rng, 0.05, 0.3) * kFs);
    std::size_t dur = static_cast<std::size_t>(Uniform(rng, 0.08, 0.35) * kFs);
    if (t >= n) break;
    dur = std::min(dur, n - t);
    const double f0_base = Uniform(rng, 90, 250);
    const double glide = Uniform(rng, -0.2, 0.2);
    const std::array<double, 3> formants{Uniform(rng, 300, 900), Uniform(rng, 900, 2200),
                                         Uniform(rng, 2000, 3500)};
    const bool unvoiced = Uniform(rng, 0, 1) < 0.3;
    const double gain = Uniform(rng, 0.3, 1.0);
    const double span = std::max((dur - 1) / kFs, 1e-3);
    double phase = 0.0;
    for (std::size_t i = 0; i < dur; ++i) {
      double v = 0.0;
      if (unvoiced) {
        v = 0.5 * gauss(rng);
      } else {
        const double f0 = f0_base * (1.0 + glide * (i / kFs) / span);
        phase += 2.0 * kPi * f0 / kFs;
        for (int h = 1; h < 40; ++h) {
          const double fh = f0 * h;
          if (fh >= 8000.0) break;
          double amp = 0.02;
          for (double fm : formants) amp += std::exp(-((fh - fm) / 150.0) * ((fh - fm) / 150.0));
          v += amp * std::sin(h * phase);
        }
      }
      const double env = std::sqrt(std::sin(kPi * static_cast<double>(i) / dur));
      out[t + i] += v * env * gain;
    }
    t += dur;
  }
  Normalize(out, rms);
  return out;
}

std::vector<double> SynthNoise(std::mt19937_64& rng, std::size_t n, double rms, double tilt) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> out(n);
  double state = 0.0;
  for (double& v : out) {
    state = tilt * state + gauss(rng);
    v = state;
  }
  Normalize(out, rms);
  return out;
}

std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace sca_aec
