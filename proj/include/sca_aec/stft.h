#pragma once

#include <vector>

#include "sca_aec/audio.h"
#include "sca_aec/autograd.h"

namespace sca_aec {

enum class WindowKind { kSqrtHann, kHann };

struct StftConfig {
  std::size_t window_len = 960;
  std::size_t hop = 480;
  std::size_t fft_len = 960;
  WindowKind kind = WindowKind::kSqrtHann;
  std::vector<double> window;

  // Builds the periodic window and validates the framing.
  static StftConfig Make(std::size_t window_len, std::size_t hop, std::size_t fft_len,
                         WindowKind kind = WindowKind::kSqrtHann);
  static StftConfig Default() { return Make(960, 480, 960); }

  std::size_t bins() const { return fft_len / 2 + 1; }
  // 1 + floor((n - window_len) / hop); throws when n < window_len.
  std::size_t Frames(std::size_t n) const;
  // Length produced by synthesis of `frames` frames.
  std::size_t SynthesisLength(std::size_t frames) const {
    return frames == 0 ? 0 : (frames - 1) * hop + window_len;
  }
  void Validate() const;
  bool SameFraming(const StftConfig& o) const {
    return window_len == o.window_len && hop == o.hop && fft_len == o.fft_len &&
           window == o.window;
  }
};

// Periodic Hann, or its square root.
std::vector<double> MakeWindow(std::size_t n, WindowKind kind);

// Overlap-add of window^p at the hop over one steady-state period:
// returns (max - min) of the resulting envelope.
double OverlapAddRipple(const std::vector<double>& window, std::size_t hop, int power);

// Smallest steady-state window^2 envelope; synthesis never divides by less.
double SynthesisFloor(const StftConfig& cfg);

struct Spectrogram {
  Tensor real;  // [t, F]
  Tensor imag;  // [t, F]
  StftConfig config;

  std::size_t frames() const { return real.empty() ? 0 : real.dim(0); }
  std::size_t bins() const { return config.bins(); }
  // [2, t, F] (real, imag)
  Tensor Planes() const;
  static Spectrogram FromPlanes(const Tensor& planes, const StftConfig& cfg);
};

Spectrogram Stft(const std::vector<double>& x, const StftConfig& cfg);
inline Spectrogram Stft(const AudioClip& clip, const StftConfig& cfg) {
  return Stft(clip.samples, cfg);
}
// Weighted overlap-add with least-squares normalization. Output length is
// cfg.SynthesisLength(frames).
std::vector<double> Istft(const Spectrogram& spec);
std::vector<double> Istft(const Spectrogram& spec, const StftConfig& expected);

// Differentiable forms. samples [n] -> planes [2, t, F] and back.
Var StftOp(Var samples, const StftConfig& cfg);
Var IstftOp(Var planes, const StftConfig& cfg);

struct SpectralFrame {
  std::vector<double> re;
  std::vector<double> im;
};

// Incremental analysis. Concatenated output equals Stft of the concatenated
// input bit for bit, for any chunking.
class StreamingStft {
 public:
  explicit StreamingStft(StftConfig cfg);
  std::vector<SpectralFrame> Push(const double* samples, std::size_t n);
  std::vector<SpectralFrame> Push(const std::vector<double>& samples) {
    return Push(samples.data(), samples.size());
  }
  const StftConfig& config() const { return cfg_; }

 private:
  StftConfig cfg_;
  std::vector<double> pending_;
};

// Incremental synthesis. Each pushed frame finalizes `hop` samples; Flush
// returns the remaining tail. Concatenated output equals Istft bit for bit.
class StreamingIstft {
 public:
  explicit StreamingIstft(StftConfig cfg);
  std::vector<double> Push(const SpectralFrame& frame);
  std::vector<double> Flush();
  const StftConfig& config() const { return cfg_; }

 private:
  StftConfig cfg_;
  double floor_;
  std::vector<double> acc_;
  std::vector<double> env_;
  std::size_t frames_ = 0;
};

namespace stft_detail {
void AnalyzeFrame(const double* x, const StftConfig& cfg, double* re, double* im);
void SynthesizeFrame(const double* re, const double* im, const StftConfig& cfg, double* out);
}  // namespace stft_detail

}  // namespace sca_aec
