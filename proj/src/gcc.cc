#include "sca_aec/gcc.h"

#include <cmath>

#include "fft.h"
#include "sca_aec/error.h"

namespace sca_aec {

namespace {

std::size_t NextPow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

double SumSq(const double* x, std::size_t n) {
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) e += x[i] * x[i];
  return e;
}

// Peak search over lags -max..max of a circular correlation of length n.
DelayEstimate PickPeak(const std::vector<double>& r, long max_delay) {
  const long n = static_cast<long>(r.size());
  auto at = [&](long lag) { return r[static_cast<std::size_t>((lag % n + n) % n)]; };
  long best = 0;
  double peak = -HUGE_VAL;
  for (long lag = -max_delay; lag <= max_delay; ++lag) {
    const double v = at(lag);
    if (v > peak) {
      peak = v;
      best = lag;
    }
  }
  double second = 0.0;
  for (long lag = -max_delay; lag <= max_delay; ++lag) {
    if (std::labs(lag - best) <= 1) continue;
    second = std::max(second, std::abs(at(lag)));
  }
  DelayEstimate e;
  e.delay_samples = best;
  e.confidence = second > 0.0 ? peak / second : HUGE_VAL;
  return e;
}

// Weighted inverse transform of a cross-spectrum.
std::vector<double> Correlate(std::vector<double> re, std::vector<double> im, std::size_t n,
                              const GccConfig& cfg) {
  if (cfg.weighting == GccWeighting::kPhat) {
    for (std::size_t k = 0; k < re.size(); ++k) {
      const double mag = std::hypot(re[k], im[k]) + cfg.epsilon;
      re[k] /= mag;
      im[k] /= mag;
    }
  }
  std::vector<double> r(n);
  fft::Inverse(re.data(), im.data(), n, r.data());
  return r;
}

// mic * conj(far) over a zero-padded transform of length n.
void CrossSpectrum(const double* mic, const double* far, std::size_t len, std::size_t n,
                   std::vector<double>& re, std::vector<double>& im) {
  std::vector<double> a(n, 0.0), b(n, 0.0);
  std::copy(mic, mic + len, a.begin());
  std::copy(far, far + len, b.begin());
  const std::size_t bins = n / 2 + 1;
  std::vector<double> ar(bins), ai(bins), br(bins), bi(bins);
  fft::Forward(a.data(), n, ar.data(), ai.data());
  fft::Forward(b.data(), n, br.data(), bi.data());
  re.resize(bins);
  im.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    re[k] = ar[k] * br[k] + ai[k] * bi[k];
    im[k] = ai[k] * br[k] - ar[k] * bi[k];
  }
}

}  // namespace

void GccConfig::Validate() const {
  if (max_delay < 0) FailUsage("gcc: max_delay must be non-negative");
  if (block_len == 0) FailUsage("gcc: block_len must be positive");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) FailUsage("gcc: smoothing must lie in [0, 1)");
  if (!(epsilon > 0.0)) FailUsage("gcc: epsilon must be positive");
}

DelayEstimate GlobalGccDelay(const std::vector<double>& mic, const std::vector<double>& far,
                             const GccConfig& cfg) {
  cfg.Validate();
  const std::size_t need = 2 * static_cast<std::size_t>(cfg.max_delay);
  if (mic.size() < need || far.size() < need) {
    FailData("gcc: clips must be at least 2 * max_delay = " + std::to_string(need) + " samples");
  }
  if (SumSq(mic.data(), mic.size()) == 0.0) FailData("gcc: silent microphone input");
  if (SumSq(far.data(), far.size()) == 0.0) FailData("gcc: silent far-end input");
  const std::size_t len = std::max(mic.size(), far.size());
  const std::size_t n = NextPow2(len + static_cast<std::size_t>(cfg.max_delay) + 1);
  std::vector<double> m(len, 0.0), f(len, 0.0);
  std::copy(mic.begin(), mic.end(), m.begin());
  std::copy(far.begin(), far.end(), f.begin());
  std::vector<double> re, im;
  CrossSpectrum(m.data(), f.data(), len, n, re, im);
  return PickPeak(Correlate(std::move(re), std::move(im), n, cfg), cfg.max_delay);
}

StreamingGcc::StreamingGcc(const GccConfig& cfg) : cfg_(cfg) {
  cfg_.Validate();
  fft_len_ = NextPow2(cfg_.span() + static_cast<std::size_t>(cfg_.max_delay) + 1);
  mic_hist_.assign(cfg_.span(), 0.0);
  far_hist_.assign(cfg_.span(), 0.0);
}

std::vector<DelayEstimate> StreamingGcc::Push(const double* mic, const double* far,
                                              std::size_t n) {
  std::vector<DelayEstimate> out;
  const std::size_t span = cfg_.span();
  for (std::size_t i = 0; i < n;) {
    const std::size_t take = std::min(n - i, cfg_.block_len - pending_);
    // shift history left by `take` and append
    std::copy(mic_hist_.begin() + static_cast<std::ptrdiff_t>(take), mic_hist_.end(), mic_hist_.begin());
    std::copy(far_hist_.begin() + static_cast<std::ptrdiff_t>(take), far_hist_.end(), far_hist_.begin());
    std::copy(mic + i, mic + i + take, mic_hist_.begin() + static_cast<std::ptrdiff_t>(span - take));
    std::copy(far + i, far + i + take, far_hist_.begin() + static_cast<std::ptrdiff_t>(span - take));
    pending_ += take;
    i += take;
    if (pending_ == cfg_.block_len) {
      pending_ = 0;
      ++blocks_;
      const std::size_t tail = span - cfg_.block_len;
      if (SumSq(mic_hist_.data() + tail, cfg_.block_len) > 0.0 &&
          SumSq(far_hist_.data() + tail, cfg_.block_len) > 0.0) {
        Update();
      }
      if (current_) out.push_back(*current_);
    }
  }
  return out;
}

std::vector<DelayEstimate> StreamingGcc::Push(const std::vector<double>& mic,
                                              const std::vector<double>& far) {
  if (mic.size() != far.size()) FailData("streaming gcc: chunk lengths differ");
  return Push(mic.data(), far.data(), mic.size());
}

void StreamingGcc::Update() {
  std::vector<double> re, im;
  CrossSpectrum(mic_hist_.data(), far_hist_.data(), cfg_.span(), fft_len_, re, im);
  if (!primed_) {
    sre_ = re;
    sim_ = im;
    primed_ = true;
  } else {
    const double a = cfg_.smoothing, b = 1.0 - cfg_.smoothing;
    for (std::size_t k = 0; k < re.size(); ++k) {
      sre_[k] = a * sre_[k] + b * re[k];
      sim_[k] = a * sim_[k] + b * im[k];
    }
  }
  current_ = PickPeak(Correlate(sre_, sim_, fft_len_, cfg_), cfg_.max_delay);
}

std::vector<double> AlignByShift(const std::vector<double>& far, long delay) {
  const long n = static_cast<long>(far.size());
  std::vector<double> out(far.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    const long src = i - delay;
    if (src >= 0 && src < n) out[static_cast<std::size_t>(i)] = far[static_cast<std::size_t>(src)];
  }
  return out;
}

}  // namespace sca_aec
