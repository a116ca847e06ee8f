#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "sca_aec/audio.h"
#include "sca_aec/error.h"
#include "sca_aec/gradcheck.h"
#include "sca_aec/ops.h"
#include "sca_aec/projection.h"
#include "sca_aec/stft.h"
#include "test_util.h"

using namespace sca_aec;
using sca_aec::testing::BitEqual;
using sca_aec::testing::RandomTensor;

namespace {

std::vector<double> Noise(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> x(n);
  for (double& v : x) v = dist(rng);
  return x;
}

double RelL2(const std::vector<double>& a, const std::vector<double>& b, std::size_t lo,
             std::size_t hi) {
  double num = 0, den = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("default framing is square-root Hann 960/480 and overlap-adds to 1") {
  const StftConfig cfg = StftConfig::Default();
  CHECK(cfg.window_len == 960);
  CHECK(cfg.hop == 480);
  CHECK(cfg.bins() == 481);
  CHECK(OverlapAddRipple(cfg.window, cfg.hop, 2) < 1e-10);
  // interior envelope of window^2 over an actual frame sequence
  const std::size_t t = 10;
  std::vector<double> env(cfg.SynthesisLength(t), 0.0);
  for (std::size_t tau = 0; tau < t; ++tau)
    for (std::size_t n = 0; n < cfg.window_len; ++n)
      env[tau * cfg.hop + n] += cfg.window[n] * cfg.window[n];
  for (std::size_t n = cfg.hop; n < env.size() - cfg.hop; ++n) CHECK(std::abs(env[n] - 1.0) < 1e-10);
  CHECK_THROWS(StftConfig::Make(960, 961, 960));
  CHECK_THROWS(StftConfig::Make(960, 480, 512));
  CHECK_THROWS(StftConfig::Make(960, 400, 960));  // not COLA at this hop
}

TEST_CASE("stft frame count and errors") {
  const StftConfig cfg = StftConfig::Default();
  CHECK(Stft(std::vector<double>(960), cfg).frames() == 1);
  CHECK(Stft(std::vector<double>(960 + 479), cfg).frames() == 1);
  CHECK(Stft(std::vector<double>(48000), cfg).frames() == 1 + (48000 - 960) / 480);
  CHECK_THROWS_AS(Stft(std::vector<double>(959), cfg), Error);
}

TEST_CASE("stft of DC under a Hann window") {
  const StftConfig cfg = StftConfig::Make(960, 480, 960, WindowKind::kHann);
  double wsum = 0;
  for (double w : cfg.window) wsum += w;
  Spectrogram s = Stft(std::vector<double>(4800, 1.0), cfg);
  for (std::size_t t = 0; t < s.frames(); ++t) {
    CHECK(std::abs(s.real.at(t, 0) - wsum) < 1e-10);
    for (std::size_t k = 0; k < s.bins(); ++k) CHECK(std::abs(s.imag.at(t, k)) < 1e-10);
  }
}

TEST_CASE("stft of a 1 kHz tone matches the DFT definition") {
  const StftConfig cfg = StftConfig::Make(960, 480, 960, WindowKind::kHann);
  std::vector<double> x(2400);
  for (std::size_t n = 0; n < x.size(); ++n)
    x[n] = std::sin(2 * std::numbers::pi * 1000.0 * n / 48000.0);
  Spectrogram s = Stft(x, cfg);
  const std::size_t peak = static_cast<std::size_t>(std::lround(1000.0 * 960 / 48000.0));
  // direct DFT on frame 1
  const std::size_t tau = 1;
  double worst = 0, best_mag = 0;
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < s.bins(); ++k) {
    double re = 0, im = 0;
    for (std::size_t n = 0; n < 960; ++n) {
      const double v = x[tau * 480 + n] * cfg.window[n];
      re += v * std::cos(2 * std::numbers::pi * k * n / 960.0);
      im -= v * std::sin(2 * std::numbers::pi * k * n / 960.0);
    }
    worst = std::max({worst, std::abs(re - s.real.at(tau, k)), std::abs(im - s.imag.at(tau, k))});
    const double mag = std::hypot(s.real.at(tau, k), s.imag.at(tau, k));
    if (mag > best_mag) {
      best_mag = mag;
      best_k = k;
    }
  }
  CHECK(worst < 1e-9);
  CHECK(best_k == peak);
  // Hann leakage: only the two neighbours carry half amplitude for a bin-centred tone
  const double m_lo = std::hypot(s.real.at(tau, peak - 1), s.imag.at(tau, peak - 1));
  CHECK(std::abs(m_lo / best_mag - 0.5) < 1e-9);
  const double far = std::hypot(s.real.at(tau, peak + 5), s.imag.at(tau, peak + 5));
  CHECK(far / best_mag < 1e-9);
}

TEST_CASE("zero signal and zero spectrogram") {
  const StftConfig cfg = StftConfig::Default();
  Spectrogram s = Stft(std::vector<double>(4800, 0.0), cfg);
  for (double v : s.real.data()) CHECK(v == 0.0);
  for (double v : s.imag.data()) CHECK(v == 0.0);
  for (double v : Istft(s)) CHECK(v == 0.0);
}

TEST_CASE("istft round trip on white noise") {
  const StftConfig cfg = StftConfig::Default();
  std::vector<double> x = Noise(48000, 1);
  std::vector<double> y = Istft(Stft(x, cfg));
  CHECK(y.size() == cfg.SynthesisLength(cfg.Frames(x.size())));
  CHECK(RelL2(y, x, cfg.hop, y.size() - cfg.hop) < 1e-6);
  // the Hann (non-root) option also inverts through the normalized overlap-add
  const StftConfig hann = StftConfig::Make(960, 480, 960, WindowKind::kHann);
  std::vector<double> yh = Istft(Stft(x, hann));
  CHECK(RelL2(yh, x, hann.hop, yh.size() - hann.hop) < 1e-6);
  Spectrogram mism = Stft(x, cfg);
  CHECK_THROWS(Istft(mism, hann));
}

TEST_CASE("istft round trip with float32 storage") {
  const StftConfig cfg = StftConfig::Default();
  // speech-shaped: noise through a one-pole low-pass
  std::vector<double> x = Noise(48000, 2);
  for (std::size_t i = 1; i < x.size(); ++i) x[i] = 0.95 * x[i - 1] + 0.05 * x[i];
  Spectrogram s = Stft(x, cfg);
  for (double& v : s.real.storage()) v = static_cast<float>(v);
  for (double& v : s.imag.storage()) v = static_cast<float>(v);
  std::vector<double> y = Istft(s);
  for (double& v : y) v = static_cast<float>(v);
  CHECK(RelL2(y, x, cfg.hop, y.size() - cfg.hop) < 1e-3);
}

TEST_CASE("streaming stft equals offline for any chunking") {
  const StftConfig cfg = StftConfig::Default();
  std::vector<double> x = Noise(9600 + 123, 3);
  Spectrogram off = Stft(x, cfg);
  std::mt19937_64 rng(9);
  for (int mode = 0; mode < 5; ++mode) {
    StreamingStft st(cfg);
    CHECK(st.Push(nullptr, 0).empty());
    std::vector<SpectralFrame> frames;
    std::size_t pos = 0;
    std::size_t pushes_after_warmup = 0, frames_after_warmup = 0;
    while (pos < x.size()) {
      std::size_t n = mode == 0 ? 1 : mode == 1 ? 480 : mode == 2 ? 4801 : 1 + rng() % 2000;
      if (mode == 4) n = 1 + rng() % 7;
      n = std::min(n, x.size() - pos);
      auto got = st.Push(x.data() + pos, n);
      if (mode == 1 && pos >= 960 && n == 480) {
        ++pushes_after_warmup;
        frames_after_warmup += got.size();
        CHECK(got.size() == 1);
      }
      frames.insert(frames.end(), got.begin(), got.end());
      pos += n;
    }
    REQUIRE(frames.size() == off.frames());
    bool same = true;
    for (std::size_t t = 0; t < frames.size(); ++t)
      for (std::size_t k = 0; k < cfg.bins(); ++k)
        same = same && frames[t].re[k] == off.real.at(t, k) && frames[t].im[k] == off.imag.at(t, k);
    CHECK(same);
  }
}

TEST_CASE("streaming istft equals offline") {
  const StftConfig cfg = StftConfig::Default();
  std::vector<double> x = Noise(9600, 4);
  Spectrogram s = Stft(x, cfg);
  std::vector<double> off = Istft(s);
  StreamingIstft si(cfg);
  std::vector<double> got;
  for (std::size_t t = 0; t < s.frames(); ++t) {
    SpectralFrame fr;
    fr.re.assign(s.real.ptr() + t * cfg.bins(), s.real.ptr() + (t + 1) * cfg.bins());
    fr.im.assign(s.imag.ptr() + t * cfg.bins(), s.imag.ptr() + (t + 1) * cfg.bins());
    auto out = si.Push(fr);
    CHECK(out.size() == cfg.hop);
    got.insert(got.end(), out.begin(), out.end());
  }
  auto tail = si.Flush();
  got.insert(got.end(), tail.begin(), tail.end());
  REQUIRE(got.size() == off.size());
  bool same = true;
  for (std::size_t i = 0; i < got.size(); ++i) same = same && got[i] == off[i];
  CHECK(same);
}

TEST_CASE("gradient check: stft and istft ops") {
  const StftConfig cfg = StftConfig::Make(16, 8, 16);
  const StftConfig odd = StftConfig::Make(10, 5, 15);
  for (int s = 0; s < 20; ++s) {
    Tensor x = RandomTensor({40}, s);
    Tensor w = RandomTensor({2, 4, 9}, s + 7);
    auto f = [&](Graph&, Var v) { return ops::WeightedSum(StftOp(v, cfg), w); };
    CHECK(GradCheck(f, x).max_rel_error < 1e-4);
    Tensor wo = RandomTensor({2, 7, 8}, s + 8);
    auto fo = [&](Graph&, Var v) { return ops::WeightedSum(StftOp(v, odd), wo); };
    CHECK(GradCheck(fo, x).max_rel_error < 1e-4);
    Tensor planes = RandomTensor({2, 4, 9}, s + 1);
    Tensor wt = RandomTensor({40}, s + 2);
    auto g = [&](Graph&, Var v) { return ops::WeightedSum(IstftOp(v, cfg), wt); };
    CHECK(GradCheck(g, planes).max_rel_error < 1e-4);
  }
}

TEST_CASE("graph stft and istft agree with the plain functions") {
  const StftConfig cfg = StftConfig::Default();
  std::vector<double> x = Noise(4800, 5);
  Graph g(false);
  Var planes = StftOp(g.Constant(Tensor({x.size()}, x)), cfg);
  CHECK(BitEqual(planes.value(), Stft(x, cfg).Planes()));
  Var y = IstftOp(planes, cfg);
  std::vector<double> ref = Istft(Stft(x, cfg));
  CHECK(y.value().storage() == ref);
}

TEST_CASE("projection") {
  Graph g(false);
  const std::size_t f = 5, t = 3;
  {
    ComplexProjection p("proj", f, f);
    for (std::size_t i = 0; i < f; ++i) p.weight.value.at(i, i) = 1.0;
    Tensor planes = RandomTensor({2, t, f}, 1);
    CHECK(BitEqual(Project(g, p, g.Constant(planes)).value(), planes));
  }
  for (int s = 0; s < 20; ++s) {
    const std::size_t d = 4;
    ComplexProjection p("proj", f, d);
    p.weight.value = RandomTensor({f, d}, s);
    p.bias.value = RandomTensor({d}, s + 1);
    Tensor real = RandomTensor({t, f}, s + 2);
    Tensor planes({2, t, f});
    std::copy(real.ptr(), real.ptr() + t * f, planes.ptr());
    std::copy(real.ptr(), real.ptr() + t * f, planes.ptr() + t * f);
    Graph gg(false);
    Var out = Project(gg, p, gg.Constant(planes));
    REQUIRE(out.shape() == Shape{2, t, d});
    for (std::size_t i = 0; i < t * d; ++i) CHECK(out.value()[i] == out.value()[t * d + i]);
    // naive matmul oracle
    Tensor rnd = RandomTensor({2, t, f}, s + 3);
    Var o2 = Project(gg, p, gg.Constant(rnd));
    double worst = 0;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t r = 0; r < t; ++r)
        for (std::size_t j = 0; j < d; ++j) {
          double acc = p.bias.value[j];
          for (std::size_t k = 0; k < f; ++k) acc += rnd[(c * t + r) * f + k] * p.weight.value.at(k, j);
          worst = std::max(worst, std::abs(acc - o2.value()[(c * t + r) * d + j]));
        }
    CHECK(worst < 1e-12);
    // affine law
    Tensor a = RandomTensor({2, t, f}, s + 4), b = RandomTensor({2, t, f}, s + 5);
    const double al = 0.7, be = -1.3;
    Tensor mix({2, t, f});
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = al * a[i] + be * b[i];
    Var pa = Project(gg, p, gg.Constant(a)), pb = Project(gg, p, gg.Constant(b)),
        pm = Project(gg, p, gg.Constant(mix));
    double lin = 0;
    for (std::size_t i = 0; i < pm.value().size(); ++i) {
      const double rhs = al * pa.value()[i] + be * pb.value()[i] -
                         (al + be - 1.0) * p.bias.value[i % d];
      lin = std::max(lin, std::abs(pm.value()[i] - rhs));
    }
    CHECK(lin < 1e-12);
  }
  ComplexProjection bad("proj", 7, 3);
  Graph g2(false);
  CHECK_THROWS(Project(g2, bad, g2.Constant(Tensor({2, 3, 5}))));
}

TEST_CASE("wav io") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sca_aec_wav_test";
  fs::create_directories(dir);
  AudioClip c;
  c.samples = {0.0, 0.5, -0.25, 0.75, -1.0};
  WriteWav((dir / "f.wav").string(), c, WavEncoding::kFloat32);
  CHECK(ReadWav((dir / "f.wav").string()).samples == c.samples);
  WriteWav((dir / "p.wav").string(), c, WavEncoding::kPcm16);
  AudioClip p = ReadWav((dir / "p.wav").string());
  REQUIRE(p.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(p.samples[i] - c.samples[i]) < 1.0 / 32768);
  AudioClip wrong;
  wrong.sample_rate = 44100;
  wrong.samples = {0.0};
  CHECK_THROWS_AS(WriteWav((dir / "w.wav").string(), wrong), Error);
  CHECK_THROWS_AS(ReadWav((dir / "missing.wav").string()), Error);
  {
    // patch the sample-rate field of a valid file to 44.1 kHz
    std::string bytes;
    {
      std::ifstream in((dir / "p.wav").string(), std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    const unsigned r = 44100;
    for (int i = 0; i < 4; ++i) bytes[24 + i] = static_cast<char>((r >> (8 * i)) & 0xff);
    std::ofstream((dir / "r.wav").string(), std::ios::binary) << bytes;
    CHECK_THROWS_AS(ReadWav((dir / "r.wav").string()), Error);
  }
  fs::remove_all(dir);
}
