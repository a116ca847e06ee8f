#include <cmath>
#include <random>

#include "doctest.h"
#include "sca_aec/error.h"
#include "sca_aec/rir.h"

using namespace sca_aec;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> DirectConvolve(const std::vector<double>& x, const std::vector<double>& h) {
  std::vector<double> y(x.size() + h.size() - 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < h.size(); ++j) y[i + j] += x[i] * h[j];
  return y;
}

std::vector<double> Noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

double Dist(const Vec3& a, const Vec3& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
}

}  // namespace

TEST_CASE("free field gives one sinc pulse at the direct-path delay") {
  RoomSpec r;
  r.rt60_s = 0.1;
  r.highpass_hz = 0.0;
  r.mic = {2.5, 2.0, 1.5};
  r.source = {2.5 + 0.7145, 2.0, 1.5};  // 100 samples, exactly on the grid
  const std::vector<double> h = ImageMethodRir(r);
  const double dist = Dist(r.source, r.mic);
  const double delay = dist / kSpeedOfSound * 48000.0;
  const std::size_t peak = static_cast<std::size_t>(std::lround(delay));
  std::size_t argmax = 0;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (std::abs(h[i]) > std::abs(h[argmax])) argmax = i;
  CHECK(argmax == peak);
  // the sinc evaluated at the pulse centre
  CHECK(h[peak] == doctest::Approx(std::sin(kPi * (peak - delay)) / (kPi * (peak - delay)) *
                                   0.5 * (1 + std::cos(kPi * (peak - delay) / 41)) /
                                   (4 * kPi * dist)).epsilon(1e-9));
  // nothing outside the 81-tap support
  for (std::size_t i = 0; i < h.size(); ++i)
    if (i + 40 < peak || i > peak + 40) CHECK(h[i] == 0.0);

  // integer delay: exactly 1/(4 pi dist) at the grid point
  RoomSpec g = r;
  g.source = {2.5 + 343.0 * 96 / 48000.0, 2.0, 1.5};
  const std::vector<double> hg = ImageMethodRir(g);
  CHECK(hg[96] == doctest::Approx(1.0 / (4 * kPi * Dist(g.source, g.mic))).epsilon(1e-12));
  CHECK(std::abs(hg[95]) < 1e-12);
}

TEST_CASE("direct path follows the 1/r law") {
  RoomSpec a;
  a.rt60_s = 0.1;
  a.highpass_hz = 0.0;
  a.mic = {1.0, 2.0, 1.5};
  a.source = {1.0 + 343.0 * 100 / 48000.0, 2.0, 1.5};
  RoomSpec b = a;
  b.source = {1.0 + 343.0 * 200 / 48000.0, 2.0, 1.5};
  const auto ha = ImageMethodRir(a), hb = ImageMethodRir(b);
  CHECK(hb[200] == doctest::Approx(ha[100] / 2).epsilon(1e-12));
}

TEST_CASE("schroeder rt60 matches targets within 20 percent") {
  const Vec3 rooms[] = {{6.0, 4.5, 3.1}, {4.0, 3.5, 2.6}, {8.0, 6.0, 3.5}};
  for (const Vec3& dims : rooms) {
    for (double target : {0.15, 0.3, 0.5}) {
      const Vec3 src{1.3, 1.1, 1.4}, mic{dims[0] - 1.8, dims[1] - 1.5, 1.6};
      const double est = SchroederRt60(ImageMethodRir(MakeRoom(dims, src, mic, target)));
      INFO("room " << dims[0] << " target " << target << " estimate " << est);
      CHECK(std::abs(est - target) <= 0.2 * target);
      const double refined = SchroederRt60(
          ImageMethodRir(MakeRoom(dims, src, mic, target, AbsorptionModel::kShoeboxFit, 1)));
      INFO("refined " << refined);
      CHECK(std::abs(refined - target) <= 0.1 * target);
    }
  }
}

TEST_CASE("room validation") {
  RoomSpec r;
  r.source = r.mic;
  r.source[0] += 0.04;
  CHECK_THROWS_AS(ImageMethodRir(r), Error);
  r.source = {7.0, 1.0, 1.0};
  CHECK_THROWS_AS(ImageMethodRir(r), Error);
  CHECK_THROWS_AS(ReflectionForRt60({5, 4, 3}, 0.0), Error);
  CHECK_THROWS_AS(ReflectionForRt60({5, 4, 3}, 0.05, AbsorptionModel::kSabine), Error);
  const double b = ReflectionForRt60({5, 4, 3}, 0.5);
  CHECK(b > 0.0);
  CHECK(b < 1.0);
  CHECK(ReflectionForRt60({5, 4, 3}, 1.0) > b);
}

TEST_CASE("fft convolution equals direct convolution") {
  for (std::uint64_t s : {1u, 2u, 3u}) {
    const auto x = Noise(300 + 37 * s, s), h = Noise(50 + 11 * s, 100 + s);
    const auto a = Convolve(x, h), b = DirectConvolve(x, h);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-10);
  }
}

TEST_CASE("static motion reduces to a single convolution") {
  RoomSpec r = MakeRoom({5, 4, 3}, {1, 1, 1.5}, {3, 2.5, 1.2}, 0.15);
  const auto x = Noise(48000, 4);
  const SourceMotion still{r.source, r.source};
  const TimeVariantRir tv;
  const auto rirs = BlockRirs(r, still, x.size(), tv);
  CHECK(rirs.size() == 10);
  const auto y = RenderTimeVariant(x, rirs, tv.block_len(48000), 480);
  auto ref = Convolve(x, ImageMethodRir(r));
  ref.resize(x.size());
  REQUIRE(y.size() == ref.size());
  for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y[i] == ref[i]);
}

TEST_CASE("two-block render matches a hand-composed crossfade") {
  const auto x = Noise(400, 7);
  const auto h1 = Noise(30, 8), h2 = Noise(30, 9);
  const std::size_t block = 200, ramp = 40;
  const auto y = RenderTimeVariant(x, {h1, h2}, block, ramp);
  const auto y1 = DirectConvolve(x, h1), y2 = DirectConvolve(x, h2);
  REQUIRE(y.size() == x.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double expect;
    if (i < block - ramp / 2) {
      expect = y1[i];
    } else if (i >= block + ramp / 2) {
      expect = y2[i];
    } else {
      const double u = (static_cast<double>(i - (block - ramp / 2)) + 0.5) / ramp;
      expect = std::cos(kPi * u / 2) * y1[i] + std::sin(kPi * u / 2) * y2[i];
    }
    worst = std::max(worst, std::abs(y[i] - expect));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("moving source has no sample-to-sample jump at block boundaries") {
  RoomSpec r = MakeRoom({6, 5, 3}, {1, 1, 1.5}, {4, 3.5, 1.2}, 0.2);
  const std::size_t n = 48000;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    for (double f : {180.0, 311.0, 523.0, 877.0})
      x[i] += std::sin(2 * kPi * f * i / 48000.0);
  const SourceMotion path{{1, 1, 1.5}, {2.5, 2.0, 1.5}};
  const TimeVariantRir tv;
  const std::size_t bl = tv.block_len(48000), ramp = 480;
  const auto y = RenderTimeVariant(x, BlockRirs(r, path, n, tv), bl, ramp);
  auto max_step = [&](std::size_t lo, std::size_t hi) {
    double m = 0;
    for (std::size_t i = lo; i + 1 < hi; ++i) m = std::max(m, std::abs(y[i + 1] - y[i]));
    return m;
  };
  // steps across each ramp against steps inside the two neighbouring blocks
  for (std::size_t b = bl; b + bl <= n; b += bl) {
    const double across = max_step(b - ramp / 2 - 1, b + ramp / 2 + 1);
    const double inside = std::max(max_step(b - bl + ramp, b - ramp), max_step(b + ramp, b + bl - ramp));
    const double jump_db = 20 * std::log10(across / inside);
    INFO("boundary " << b << " jump " << jump_db << " dB");
    CHECK(jump_db < 6.0);
  }
  CHECK_THROWS_AS(BlockRirs(r, SourceMotion{{1, 1, 1.5}, {7, 1, 1.5}}, n, tv), Error);
}
