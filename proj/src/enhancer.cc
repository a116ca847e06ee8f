#include "sca_aec/enhancer.h"

#include "sca_aec/error.h"

namespace sca_aec {

namespace {

// Padded length holding front padding, the signal, and a trailing
// window_len - hop zeros, rounded up to whole frames.
std::size_t PaddedLength(std::size_t n, const StftConfig& cfg) {
  const std::size_t raw = 2 * AnalysisFrontPad(cfg) + n;
  if (raw <= cfg.window_len) return cfg.window_len;
  const std::size_t frames = 1 + (raw - cfg.window_len + cfg.hop - 1) / cfg.hop;
  return (frames - 1) * cfg.hop + cfg.window_len;
}

}  // namespace

std::size_t AnalysisFrontPad(const StftConfig& cfg) { return cfg.window_len - cfg.hop; }

std::vector<double> PadForAnalysis(const std::vector<double>& x, const StftConfig& cfg) {
  std::vector<double> out(PaddedLength(x.size(), cfg), 0.0);
  std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(AnalysisFrontPad(cfg)));
  return out;
}

std::vector<double> EnhanceOffline(ScaCrnModel& m, const std::vector<double>& mic,
                                   const std::vector<double>& far, bool zero_mask) {
  if (mic.size() != far.size()) {
    FailData("enhance: mic has " + std::to_string(mic.size()) + " samples, far " +
             std::to_string(far.size()));
  }
  const StftConfig& cfg = m.config().stft;
  Spectrogram ms = Stft(PadForAnalysis(mic, cfg), cfg);
  Spectrogram fs = Stft(PadForAnalysis(far, cfg), cfg);
  std::vector<double> y = Istft(EnhanceSpectrogram(m, ms, fs, zero_mask));
  const auto begin = y.begin() + static_cast<std::ptrdiff_t>(AnalysisFrontPad(cfg));
  return std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(mic.size()));
}

StreamingEnhancer::StreamingEnhancer(const ScaCrnModel& m, bool zero_mask)
    : cfg_(m.config().stft),
      mic_stft_(cfg_),
      far_stft_(cfg_),
      model_(m, zero_mask),
      istft_(cfg_),
      skip_(AnalysisFrontPad(cfg_)) {
  const std::vector<double> pad(AnalysisFrontPad(cfg_), 0.0);
  mic_stft_.Push(pad);
  far_stft_.Push(pad);
}

std::vector<double> StreamingEnhancer::Push(const std::vector<double>& mic,
                                            const std::vector<double>& far) {
  if (mic.size() != far.size()) FailData("streaming enhance: chunk lengths differ");
  return Push(mic.data(), far.data(), mic.size());
}

std::vector<double> StreamingEnhancer::Push(const double* mic, const double* far, std::size_t n) {
  if (flushed_) FailUsage("streaming enhance: push after flush");
  consumed_ += n;
  std::vector<SpectralFrame> mf = mic_stft_.Push(mic, n);
  std::vector<SpectralFrame> ff = far_stft_.Push(far, n);
  std::vector<double> out;
  for (std::size_t i = 0; i < mf.size(); ++i) Emit(model_.Push(mf[i], ff[i]), out);
  return out;
}

std::vector<double> StreamingEnhancer::Flush() {
  if (flushed_) return {};
  flushed_ = true;
  const std::size_t pushed = AnalysisFrontPad(cfg_) + consumed_;
  const std::vector<double> tail(PaddedLength(consumed_, cfg_) - pushed, 0.0);
  std::vector<SpectralFrame> mf = mic_stft_.Push(tail);
  std::vector<SpectralFrame> ff = far_stft_.Push(tail);
  std::vector<double> out;
  for (std::size_t i = 0; i < mf.size(); ++i) Emit(model_.Push(mf[i], ff[i]), out);
  Emit(model_.Flush(), out);
  Deliver(istft_.Flush(), out);
  return out;
}

void StreamingEnhancer::Emit(const std::vector<SpectralFrame>& frames, std::vector<double>& out) {
  for (const SpectralFrame& fr : frames) Deliver(istft_.Push(fr), out);
}

void StreamingEnhancer::Deliver(const std::vector<double>& samples, std::vector<double>& out) {
  for (double s : samples) {
    if (skip_ > 0) {
      --skip_;
      continue;
    }
    if (produced_ >= consumed_) return;  // trailing padding
    out.push_back(s);
    ++produced_;
  }
}

}  // namespace sca_aec
