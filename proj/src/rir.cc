#include "sca_aec/rir.h"

#include <cmath>
#include <numeric>

#include "fft.h"
#include "sca_aec/error.h"

namespace sca_aec {

namespace {

constexpr double kPi = 3.14159265358979323846;

double Distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

bool Inside(const Vec3& p, const Vec3& dims) {
  for (int k = 0; k < 3; ++k)
    if (!(p[k] > 0.0 && p[k] < dims[k])) return false;
  return true;
}

std::size_t NextPow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

namespace {

// Line fit of the decay curve between -5 and -25 dB; times are index / rate.
double FitT20(const std::vector<double>& edc, double rate) {
  const double total = edc.front();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < edc.size(); ++i) {
    const double db = 10.0 * std::log10(edc[i] / total);
    if (db > -5.0) continue;
    if (!(db >= -25.0)) break;
    const double t = static_cast<double>(i) / rate;
    sx += t;
    sy += db;
    sxx += t * t;
    sxy += t * db;
    ++count;
  }
  if (count < 2) FailData("schroeder: decay curve too short to fit");
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  if (!(slope < 0.0)) FailData("schroeder: decay curve does not decay");
  return -60.0 / slope;
}

// T20 of the direction-averaged image decay for log reflection coefficient
// log_beta, evaluated over a response of length_s seconds.
double ShoeboxT20(const std::vector<double>& rates, double log_beta, double length_s) {
  constexpr std::size_t kPoints = 400;
  const double rate = kPoints / length_s;
  std::vector<double> edc(kPoints, 0.0);
  for (double a : rates) {
    const double k = -2.0 * log_beta * a;  // energy decay rate
    const double tail = std::exp(-k * length_s);
    for (std::size_t i = 0; i < kPoints; ++i) edc[i] += (std::exp(-k * i / rate) - tail) / k;
  }
  if (edc.back() > 0.3 * edc[0]) return HUGE_VAL;
  try {
    return FitT20(edc, rate);
  } catch (const Error&) {
    return 0.0;  // decays faster than the grid resolves
  }
}

double ShoeboxFitReflection(const Vec3& dims, double rt60_s, double eyring_beta) {
  // Fibonacci directions over the positive octant, weights equal.
  constexpr int kDirs = 512;
  std::vector<double> rates;
  rates.reserve(kDirs);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < kDirs; ++i) {
    const double z = (i + 0.5) / kDirs;
    const double r = std::sqrt(1.0 - z * z);
    const double phi = std::fmod(golden * i, 0.5 * kPi);
    const double ux = r * std::cos(phi), uy = r * std::sin(phi);
    rates.push_back(kSpeedOfSound * (ux / dims[0] + uy / dims[1] + z / dims[2]));
  }
  const double length_s = rt60_s + 0.1;
  double lo = std::log(1e-6), hi = std::log(eyring_beta);  // T20 grows with beta
  while (ShoeboxT20(rates, hi, length_s) < rt60_s) {
    lo = hi;
    hi = 0.5 * hi;
    if (hi > -1e-9) return std::exp(hi);
  }
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ShoeboxT20(rates, mid, length_s) < rt60_s) lo = mid; else hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

}  // namespace

void RoomSpec::Validate() const {
  for (double v : dims)
    if (!(v > 0.0)) FailUsage("room: dimensions must be positive");
  if (!Inside(source, dims)) FailUsage("room: source outside the room");
  if (!Inside(mic, dims)) FailUsage("room: microphone outside the room");
  if (Distance(source, mic) < 0.05) FailUsage("room: source closer than 0.05 m to the microphone");
  for (double b : beta)
    if (!(b >= 0.0 && b < 1.0)) FailUsage("room: reflection coefficients must lie in [0, 1)");
  if (!(rt60_s > 0.0)) FailUsage("room: rt60 must be positive");
  if (!(sample_rate > 0.0)) FailUsage("room: bad sample rate");
  if (!(highpass_hz >= 0.0 && highpass_hz < 0.5 * sample_rate)) FailUsage("room: bad high-pass cutoff");
}

std::size_t RoomSpec::length() const {
  return static_cast<std::size_t>(std::ceil((rt60_s + 0.1) * sample_rate));
}

double ReflectionForRt60(const Vec3& dims, double rt60_s, AbsorptionModel model) {
  if (!(rt60_s > 0.0)) FailUsage("rt60 must be positive");
  const double volume = dims[0] * dims[1] * dims[2];
  const double surface = 2.0 * (dims[0] * dims[1] + dims[0] * dims[2] + dims[1] * dims[2]);
  const double k = 24.0 * std::log(10.0) / kSpeedOfSound;  // Sabine constant, about 0.161
  double alpha = 0.0;
  if (model == AbsorptionModel::kSabine) {
    alpha = k * volume / (surface * rt60_s);
    if (alpha >= 1.0) FailUsage("rt60 too short for this room under Sabine's formula");
    return std::sqrt(1.0 - alpha);
  }
  alpha = 1.0 - std::exp(-k * volume / (surface * rt60_s));
  const double eyring = std::sqrt(1.0 - alpha);
  if (model == AbsorptionModel::kEyring) return eyring;
  return ShoeboxFitReflection(dims, rt60_s, eyring);
}

RoomSpec MakeRoom(const Vec3& dims, const Vec3& source, const Vec3& mic, double rt60_s,
                  AbsorptionModel model, int refine) {
  RoomSpec r;
  r.dims = dims;
  r.source = source;
  r.mic = mic;
  r.rt60_s = rt60_s;
  r.beta.fill(ReflectionForRt60(dims, rt60_s, model));
  r.Validate();
  for (int i = 0; i < refine; ++i) {
    const double measured = SchroederRt60(ImageMethodRir(r), r.sample_rate);
    const double b = std::exp(std::log(r.beta[0]) * measured / rt60_s);
    r.beta.fill(std::min(b, 0.999));
  }
  return r;
}

void HighPass(std::vector<double>& x, double cutoff_hz, double sample_rate) {
  const double w0 = 2.0 * kPi * cutoff_hz / sample_rate;
  const double alpha = std::sin(w0) / std::sqrt(2.0);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  const double b0 = (1.0 + cw) / 2.0 / a0, b1 = -(1.0 + cw) / a0, b2 = b0;
  const double a1 = -2.0 * cw / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& v : x) {
    const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

void AddFractionalImpulse(std::vector<double>& h, double delay, double amp) {
  const long half = static_cast<long>(kSincTaps / 2);
  const long center = std::lround(delay);
  for (long n = center - half; n <= center + half; ++n) {
    if (n < 0 || n >= static_cast<long>(h.size())) continue;
    const double u = static_cast<double>(n) - delay;
    const double sinc = std::abs(u) < 1e-12 ? 1.0 : std::sin(kPi * u) / (kPi * u);
    const double window = 0.5 * (1.0 + std::cos(kPi * u / (half + 1)));
    h[n] += amp * sinc * window;
  }
}

std::vector<double> ImageMethodRir(const RoomSpec& room) {
  room.Validate();
  const std::size_t len = room.length();
  std::vector<double> h(len, 0.0);
  const double fs = room.sample_rate;
  const double reach = static_cast<double>(len + kSincTaps) / fs * kSpeedOfSound;

  // Per axis: image offset component and reflection factor for (l, u).
  struct Term {
    double delta;
    double gain;
    long order;
  };
  std::array<std::vector<Term>, 3> axes;
  for (int a = 0; a < 3; ++a) {
    const double L = room.dims[a];
    long n_max = static_cast<long>(std::ceil(reach / (2.0 * L))) + 1;
    if (room.max_order >= 0) n_max = std::min<long>(n_max, room.max_order);
    const double b0 = room.beta[2 * a], b1 = room.beta[2 * a + 1];
    for (long l = -n_max; l <= n_max; ++l)
      for (int u = 0; u < 2; ++u) {
        const long r0 = std::labs(l - u), r1 = std::labs(l);
        if (room.max_order >= 0 && r0 + r1 > room.max_order) continue;
        const double pos = (u ? -room.source[a] : room.source[a]) + 2.0 * l * L;
        const double delta = pos - room.mic[a];
        if (std::abs(delta) > reach) continue;
        const double gain = std::pow(b0, static_cast<double>(r0)) * std::pow(b1, static_cast<double>(r1));
        if (gain == 0.0 && (r0 + r1) > 0) continue;
        axes[a].push_back({delta, gain, r0 + r1});
      }
  }
  const double reach2 = reach * reach;
  for (const Term& tx : axes[0])
    for (const Term& ty : axes[1]) {
      const double dxy = tx.delta * tx.delta + ty.delta * ty.delta;
      if (dxy > reach2) continue;
      const double gxy = tx.gain * ty.gain;
      for (const Term& tz : axes[2]) {
        if (room.max_order >= 0 && tx.order + ty.order + tz.order > room.max_order) continue;
        const double d2 = dxy + tz.delta * tz.delta;
        if (d2 > reach2) continue;
        const double dist = std::sqrt(d2);
        AddFractionalImpulse(h, dist / kSpeedOfSound * fs, gxy * tz.gain / (4.0 * kPi * dist));
      }
    }
  if (room.highpass_hz > 0.0) HighPass(h, room.highpass_hz, fs);
  return h;
}

double SchroederRt60(const std::vector<double>& h, double sample_rate) {
  const std::size_t n = h.size();
  std::vector<double> edc(n);
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  if (!(acc > 0.0)) FailData("schroeder: silent impulse response");
  return FitT20(edc, sample_rate);
}

std::vector<double> Convolve(const std::vector<double>& x, const std::vector<double>& h) {
  if (x.empty() || h.empty()) return {};
  const std::size_t out_len = x.size() + h.size() - 1;
  if (std::min(x.size(), h.size()) <= 32) {
    std::vector<double> y(out_len, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < h.size(); ++j) y[i + j] += x[i] * h[j];
    return y;
  }
  const std::size_t n = NextPow2(out_len);
  const std::size_t bins = n / 2 + 1;
  std::vector<double> a(n, 0.0), b(n, 0.0);
  std::copy(x.begin(), x.end(), a.begin());
  std::copy(h.begin(), h.end(), b.begin());
  std::vector<double> ar(bins), ai(bins), br(bins), bi(bins);
  fft::Forward(a.data(), n, ar.data(), ai.data());
  fft::Forward(b.data(), n, br.data(), bi.data());
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = ar[k] * br[k] - ai[k] * bi[k];
    const double im = ar[k] * bi[k] + ai[k] * br[k];
    ar[k] = re / static_cast<double>(n);
    ai[k] = im / static_cast<double>(n);
  }
  fft::Inverse(ar.data(), ai.data(), n, a.data());
  a.resize(out_len);
  return a;
}

std::size_t TimeVariantRir::block_len(double fs) const {
  return static_cast<std::size_t>(std::lround(block_s * fs));
}

std::vector<std::vector<double>> BlockRirs(const RoomSpec& room, const SourceMotion& motion,
                                           std::size_t n, const TimeVariantRir& tv) {
  const std::size_t bl = tv.block_len(room.sample_rate);
  if (bl == 0) FailUsage("time-variant rir: empty block");
  const std::size_t blocks = std::max<std::size_t>(1, (n + bl - 1) / bl);
  std::vector<std::vector<double>> out;
  for (std::size_t b = 0; b < blocks; ++b) {
    const double frac = blocks == 1 ? 0.0 : static_cast<double>(b) / static_cast<double>(blocks - 1);
    RoomSpec r = room;
    for (int k = 0; k < 3; ++k) r.source[k] = motion.start[k] + frac * (motion.end[k] - motion.start[k]);
    if (!Inside(r.source, r.dims)) FailUsage("time-variant rir: source path exits the room");
    out.push_back(ImageMethodRir(r));
  }
  return out;
}

std::vector<double> RenderTimeVariant(const std::vector<double>& x,
                                      const std::vector<std::vector<double>>& rirs,
                                      std::size_t block_len, std::size_t ramp_len) {
  if (rirs.empty()) FailUsage("time-variant render: no responses");
  const std::size_t n = x.size();
  // merge runs of identical responses
  struct Segment {
    std::size_t begin, end;
    const std::vector<double>* h;
  };
  std::vector<Segment> segs;
  for (std::size_t b = 0; b < rirs.size(); ++b) {
    const std::size_t lo = std::min(n, b * block_len);
    const std::size_t hi = b + 1 == rirs.size() ? n : std::min(n, (b + 1) * block_len);
    if (!segs.empty() && *segs.back().h == rirs[b]) {
      segs.back().end = hi;
    } else {
      segs.push_back({lo, hi, &rirs[b]});
    }
  }
  if (segs.size() == 1) {
    std::vector<double> y = Convolve(x, *segs[0].h);
    y.resize(n);
    return y;
  }
  const std::size_t half = ramp_len / 2;
  std::vector<double> y(n, 0.0);
  for (std::size_t j = 0; j < segs.size(); ++j) {
    const Segment& s = segs[j];
    const std::size_t lo = j == 0 ? 0 : (s.begin > half ? s.begin - half : 0);
    const std::size_t hi = j + 1 == segs.size() ? n : std::min(n, s.end + half);
    if (lo >= hi) continue;
    const std::size_t m = s.h->size();
    const std::size_t xlo = lo + 1 > m ? lo + 1 - m : 0;
    std::vector<double> xs(x.begin() + static_cast<std::ptrdiff_t>(xlo),
                           x.begin() + static_cast<std::ptrdiff_t>(hi));
    const std::vector<double> c = Convolve(xs, *s.h);
    for (std::size_t i = lo; i < hi; ++i) {
      double g = 1.0;
      if (j > 0 && i + half >= s.begin && i < s.begin + half) {
        const double u = (static_cast<double>(i + half - s.begin) + 0.5) / ramp_len;
        g = std::sin(0.5 * kPi * u);
      } else if (j + 1 < segs.size() && i + half >= s.end && i < s.end + half) {
        const double u = (static_cast<double>(i + half - s.end) + 0.5) / ramp_len;
        g = std::cos(0.5 * kPi * u);
      }
      y[i] += g * c[i - xlo];
    }
  }
  return y;
}

}  // namespace sca_aec
