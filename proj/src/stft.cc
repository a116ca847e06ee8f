#include "sca_aec/stft.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fft.h"
#include "sca_aec/error.h"

namespace sca_aec {

std::vector<double> MakeWindow(std::size_t n, WindowKind kind) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    w[i] = kind == WindowKind::kHann ? hann : std::sqrt(hann);
  }
  return w;
}

double OverlapAddRipple(const std::vector<double>& window, std::size_t hop, int power) {
  if (hop == 0) return 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t n = 0; n < hop; ++n) {
    double s = 0.0;
    for (std::size_t m = n; m < window.size(); m += hop) s += std::pow(window[m], power);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return hi - lo;
}

double SynthesisFloor(const StftConfig& cfg) {
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < cfg.hop; ++n) {
    double s = 0.0;
    for (std::size_t m = n; m < cfg.window_len; m += cfg.hop) s += cfg.window[m] * cfg.window[m];
    lo = std::min(lo, s);
  }
  return lo;
}

StftConfig StftConfig::Make(std::size_t window_len, std::size_t hop, std::size_t fft_len,
                            WindowKind kind) {
  StftConfig c;
  c.window_len = window_len;
  c.hop = hop;
  c.fft_len = fft_len;
  c.kind = kind;
  c.window = MakeWindow(window_len, kind);
  c.Validate();
  return c;
}

void StftConfig::Validate() const {
  if (window_len == 0 || hop == 0) FailUsage("stft: window and hop must be positive");
  if (hop > window_len) FailUsage("stft: hop exceeds window length");
  if (fft_len < window_len) FailUsage("stft: fft length shorter than window");
  if (window.size() != window_len) FailUsage("stft: window coefficient count mismatch");
  const bool cola = OverlapAddRipple(window, hop, 1) < 1e-10 ||
                    OverlapAddRipple(window, hop, 2) < 1e-10;
  if (!cola) FailUsage("stft: window does not overlap-add to a constant at this hop");
  if (!(SynthesisFloor(*this) > 0.0)) FailUsage("stft: synthesis envelope vanishes");
}

std::size_t StftConfig::Frames(std::size_t n) const {
  if (n < window_len) {
    FailData("stft: clip of " + std::to_string(n) + " samples is shorter than the " +
             std::to_string(window_len) + "-sample window");
  }
  return 1 + (n - window_len) / hop;
}

Tensor Spectrogram::Planes() const {
  const std::size_t t = frames(), f = bins();
  Tensor out({2, t, f});
  std::copy(real.ptr(), real.ptr() + t * f, out.ptr());
  std::copy(imag.ptr(), imag.ptr() + t * f, out.ptr() + t * f);
  return out;
}

Spectrogram Spectrogram::FromPlanes(const Tensor& planes, const StftConfig& cfg) {
  if (planes.rank() != 3 || planes.dim(0) != 2 || planes.dim(2) != cfg.bins()) {
    FailUsage("spectrogram: planes " + ShapeString(planes.shape()) + " do not match " +
              std::to_string(cfg.bins()) + " bins");
  }
  const std::size_t t = planes.dim(1), f = planes.dim(2);
  Spectrogram s;
  s.config = cfg;
  s.real = Tensor({t, f}, std::vector<double>(planes.ptr(), planes.ptr() + t * f));
  s.imag = Tensor({t, f}, std::vector<double>(planes.ptr() + t * f, planes.ptr() + 2 * t * f));
  return s;
}

namespace stft_detail {

void AnalyzeFrame(const double* x, const StftConfig& cfg, double* re, double* im) {
  thread_local std::vector<double> buf;
  buf.assign(cfg.fft_len, 0.0);
  for (std::size_t n = 0; n < cfg.window_len; ++n) buf[n] = x[n] * cfg.window[n];
  fft::Forward(buf.data(), cfg.fft_len, re, im);
}

void SynthesizeFrame(const double* re, const double* im, const StftConfig& cfg, double* out) {
  thread_local std::vector<double> buf;
  buf.resize(cfg.fft_len);
  fft::Inverse(re, im, cfg.fft_len, buf.data());
  const double scale = 1.0 / static_cast<double>(cfg.fft_len);
  for (std::size_t n = 0; n < cfg.window_len; ++n) out[n] = buf[n] * scale * cfg.window[n];
}

}  // namespace stft_detail

Spectrogram Stft(const std::vector<double>& x, const StftConfig& cfg) {
  const std::size_t t = cfg.Frames(x.size()), f = cfg.bins();
  Spectrogram s;
  s.config = cfg;
  s.real = Tensor({t, f});
  s.imag = Tensor({t, f});
  for (std::size_t tau = 0; tau < t; ++tau) {
    stft_detail::AnalyzeFrame(x.data() + tau * cfg.hop, cfg, s.real.ptr() + tau * f,
                              s.imag.ptr() + tau * f);
  }
  return s;
}

namespace {

// Overlap-adds synthesized frames and divides by the clamped envelope.
std::vector<double> Synthesize(const double* re, const double* im, std::size_t t,
                               const StftConfig& cfg) {
  const std::size_t f = cfg.bins();
  const std::size_t len = cfg.SynthesisLength(t);
  std::vector<double> out(len, 0.0), env(len, 0.0), frame(cfg.window_len);
  for (std::size_t tau = 0; tau < t; ++tau) {
    stft_detail::SynthesizeFrame(re + tau * f, im + tau * f, cfg, frame.data());
    const std::size_t off = tau * cfg.hop;
    for (std::size_t n = 0; n < cfg.window_len; ++n) {
      out[off + n] += frame[n];
      env[off + n] += cfg.window[n] * cfg.window[n];
    }
  }
  const double floor = SynthesisFloor(cfg);
  for (std::size_t n = 0; n < len; ++n) out[n] /= std::max(env[n], floor);
  return out;
}

std::vector<double> Envelope(std::size_t t, const StftConfig& cfg) {
  std::vector<double> env(cfg.SynthesisLength(t), 0.0);
  for (std::size_t tau = 0; tau < t; ++tau)
    for (std::size_t n = 0; n < cfg.window_len; ++n)
      env[tau * cfg.hop + n] += cfg.window[n] * cfg.window[n];
  const double floor = SynthesisFloor(cfg);
  for (double& e : env) e = std::max(e, floor);
  return env;
}

}  // namespace

std::vector<double> Istft(const Spectrogram& spec) {
  spec.config.Validate();
  if (spec.real.shape() != spec.imag.shape() || spec.real.rank() != 2 ||
      spec.real.dim(1) != spec.config.bins()) {
    FailUsage("istft: spectrogram planes do not match the configuration");
  }
  return Synthesize(spec.real.ptr(), spec.imag.ptr(), spec.frames(), spec.config);
}

std::vector<double> Istft(const Spectrogram& spec, const StftConfig& expected) {
  if (!spec.config.SameFraming(expected)) FailUsage("istft: configuration mismatch");
  return Istft(spec);
}

Var StftOp(Var samples, const StftConfig& cfg) {
  if (samples.shape().size() != 1) FailUsage("stft: expected a 1-D sample vector");
  const std::size_t n = samples.shape()[0];
  Spectrogram s = Stft(samples.value().storage(), cfg);
  const std::size_t t = s.frames(), f = cfg.bins();
  return samples.graph().Emit(s.Planes(), {samples}, [samples, cfg, n, t, f](Graph& g, const Tensor& go) {
    Tensor* sx = g.GradSink(samples);
    if (sx == nullptr) return;
    // adjoint of the windowed half-spectrum DFT
    std::vector<double> re(f), im(f), y(cfg.fft_len);
    const bool even = cfg.fft_len % 2 == 0;
    for (std::size_t tau = 0; tau < t; ++tau) {
      for (std::size_t k = 0; k < f; ++k) {
        const bool edge = k == 0 || (even && k == f - 1);
        const double c = edge ? 1.0 : 0.5;
        re[k] = c * go[tau * f + k];
        im[k] = c * go[(t + tau) * f + k];
      }
      fft::Inverse(re.data(), im.data(), cfg.fft_len, y.data());
      double* dst = sx->ptr() + tau * cfg.hop;
      for (std::size_t m = 0; m < cfg.window_len; ++m) dst[m] += y[m] * cfg.window[m];
    }
    (void)n;
  });
}

Var IstftOp(Var planes, const StftConfig& cfg) {
  const Shape& ps = planes.shape();
  if (ps.size() != 3 || ps[0] != 2 || ps[2] != cfg.bins()) {
    FailUsage("istft: planes " + ShapeString(ps) + " do not match the configuration");
  }
  const std::size_t t = ps[1], f = ps[2];
  const double* p = planes.value().ptr();
  std::vector<double> out = Synthesize(p, p + t * f, t, cfg);
  const std::size_t len = out.size();
  Tensor value({len}, std::move(out));
  return planes.graph().Emit(std::move(value), {planes}, [planes, cfg, t, f](Graph& g, const Tensor& go) {
    Tensor* sp = g.GradSink(planes);
    if (sp == nullptr) return;
    const std::vector<double> env = Envelope(t, cfg);
    const bool even = cfg.fft_len % 2 == 0;
    const double inv_n = 1.0 / static_cast<double>(cfg.fft_len);
    std::vector<double> y(cfg.fft_len), re(f), im(f);
    for (std::size_t tau = 0; tau < t; ++tau) {
      std::fill(y.begin(), y.end(), 0.0);
      const std::size_t off = tau * cfg.hop;
      for (std::size_t m = 0; m < cfg.window_len; ++m)
        y[m] = go[off + m] / env[off + m] * cfg.window[m] * inv_n;
      fft::Forward(y.data(), cfg.fft_len, re.data(), im.data());
      for (std::size_t k = 0; k < f; ++k) {
        const bool edge = k == 0 || (even && k == f - 1);
        const double c = edge ? 1.0 : 2.0;
        (*sp)[tau * f + k] += c * re[k];
        // c2r ignores the imaginary part of DC and Nyquist
        if (!edge) (*sp)[(t + tau) * f + k] += c * im[k];
      }
    }
  });
}

StreamingStft::StreamingStft(StftConfig cfg) : cfg_(std::move(cfg)) { cfg_.Validate(); }

std::vector<SpectralFrame> StreamingStft::Push(const double* samples, std::size_t n) {
  pending_.insert(pending_.end(), samples, samples + n);
  std::vector<SpectralFrame> frames;
  std::size_t start = 0;
  while (pending_.size() - start >= cfg_.window_len) {
    SpectralFrame fr;
    fr.re.resize(cfg_.bins());
    fr.im.resize(cfg_.bins());
    stft_detail::AnalyzeFrame(pending_.data() + start, cfg_, fr.re.data(), fr.im.data());
    frames.push_back(std::move(fr));
    start += cfg_.hop;
  }
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(start));
  return frames;
}

StreamingIstft::StreamingIstft(StftConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.Validate();
  floor_ = SynthesisFloor(cfg_);
  acc_.assign(cfg_.window_len, 0.0);
  env_.assign(cfg_.window_len, 0.0);
}

std::vector<double> StreamingIstft::Push(const SpectralFrame& frame) {
  if (frame.re.size() != cfg_.bins() || frame.im.size() != cfg_.bins()) {
    FailUsage("streaming istft: frame bin count mismatch");
  }
  std::vector<double> synth(cfg_.window_len);
  stft_detail::SynthesizeFrame(frame.re.data(), frame.im.data(), cfg_, synth.data());
  for (std::size_t n = 0; n < cfg_.window_len; ++n) {
    acc_[n] += synth[n];
    env_[n] += cfg_.window[n] * cfg_.window[n];
  }
  ++frames_;
  std::vector<double> out(cfg_.hop);
  for (std::size_t n = 0; n < cfg_.hop; ++n) out[n] = acc_[n] / std::max(env_[n], floor_);
  acc_.erase(acc_.begin(), acc_.begin() + static_cast<std::ptrdiff_t>(cfg_.hop));
  env_.erase(env_.begin(), env_.begin() + static_cast<std::ptrdiff_t>(cfg_.hop));
  acc_.resize(cfg_.window_len, 0.0);
  env_.resize(cfg_.window_len, 0.0);
  return out;
}

std::vector<double> StreamingIstft::Flush() {
  std::vector<double> out;
  if (frames_ == 0) return out;
  const std::size_t tail = cfg_.window_len - cfg_.hop;
  out.resize(tail);
  for (std::size_t n = 0; n < tail; ++n) out[n] = acc_[n] / std::max(env_[n], floor_);
  acc_.assign(cfg_.window_len, 0.0);
  env_.assign(cfg_.window_len, 0.0);
  frames_ = 0;
  return out;
}

}  // namespace sca_aec
