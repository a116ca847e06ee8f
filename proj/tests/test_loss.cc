#include <cmath>
#include <random>

#include "doctest.h"
#include "sca_aec/error.h"
#include "sca_aec/gradcheck.h"
#include "sca_aec/loss.h"
#include "test_util.h"

using namespace sca_aec;

namespace {

std::vector<double> Noise(std::size_t n, std::uint64_t seed, double amp = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, amp);
  std::vector<double> x(n);
  for (double& v : x) v = dist(rng);
  return x;
}

// Two-pass oracle: time-domain loop plus a direct DFT per frame.
double OracleLoss(const std::vector<double>& a, const std::vector<double>& b, double alpha,
                  double beta, const std::vector<double>& w, std::size_t win, std::size_t hop) {
  double t = 0;
  for (std::size_t i = 0; i < a.size(); ++i) t += std::abs(a[i] - b[i]);
  const double pi = std::acos(-1.0);
  std::vector<double> window(win);
  for (std::size_t n = 0; n < win; ++n) window[n] = std::sqrt(0.5 - 0.5 * std::cos(2 * pi * n / win));
  double s = 0;
  const std::size_t frames = 1 + (a.size() - win) / hop;
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t k = 0; k <= win / 2; ++k) {
      double re = 0, im = 0;
      for (std::size_t n = 0; n < win; ++n) {
        const double d = (a[f * hop + n] - b[f * hop + n]) * window[n];
        re += d * std::cos(2 * pi * k * n / win);
        im -= d * std::sin(2 * pi * k * n / win);
      }
      s += w[k] * std::hypot(re, im);
    }
  return alpha * t + beta * s;
}

}  // namespace

TEST_CASE("loss examples") {
  const StftConfig cfg = StftConfig::Make(64, 32, 64);
  std::vector<double> s = Noise(100, 1);
  CHECK(AecLoss(s, s, {}, cfg).total() == 0.0);
  std::vector<double> e = s;
  for (double& v : e) v += 0.5;
  LossWeights time_only;
  time_only.beta = 0.0;
  CHECK(std::abs(AecLoss(e, s, time_only, cfg).total() - 50.0) < 1e-12);
  CHECK_THROWS_AS(AecLoss(e, std::vector<double>(99), {}, cfg), Error);
  LossWeights bad;
  bad.alpha = -1;
  CHECK_THROWS_AS(AecLoss(e, s, bad, cfg), Error);
  bad = {};
  bad.w = std::vector<double>(5, 1.0);
  CHECK_THROWS_AS(AecLoss(e, s, bad, cfg), Error);
}

TEST_CASE("loss matches the direct-summation oracle") {
  const StftConfig cfg = StftConfig::Make(64, 32, 64);
  for (int seed = 0; seed < 5; ++seed) {
    std::vector<double> a = Noise(300, seed), b = Noise(300, seed + 100);
    LossWeights lw;
    lw.alpha = 0.7;
    lw.beta = 1.3;
    lw.w = LowFrequencyWeights(cfg.bins());
    const double got = AecLoss(a, b, lw, cfg).total();
    const double want = OracleLoss(a, b, 0.7, 1.3, lw.w, 64, 32);
    CHECK(std::abs(got - want) / want < 1e-9);
    CHECK(got > 0);
  }
}

TEST_CASE("graph loss equals plain loss and passes a gradient check") {
  const StftConfig cfg = StftConfig::Make(32, 16, 32);
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 20 && seed < 40; ++seed) {
    std::vector<double> target = Noise(96, seed + 1);
    Tensor x(Shape{96}, Noise(96, seed + 2));
    for (bool squared : {false, true}) {
      LossWeights lw;
      lw.squared = squared;
      lw.w = LowFrequencyWeights(cfg.bins());
      Graph g(false);
      const double graph_loss = AecLoss(g, g.Constant(x), target, lw, cfg).total.value()[0];
      const double plain = AecLoss(x.storage(), target, lw, cfg).total();
      CHECK(std::abs(graph_loss - plain) <= 1e-12 * plain);
    }
    LossWeights lw;
    GradCheckResult r = GradCheck(
        [&](Graph& g, Var v) { return AecLoss(g, v, target, lw, cfg).total; }, x, 1e-5, 0, seed);
    if (r.min_kink < 1e-4) continue;
    ++checked;
    CHECK(r.max_rel_error < 1e-4);
  }
  CHECK(checked == 20);
}

TEST_CASE("erle") {
  std::vector<double> mic = Noise(1000, 3);
  CHECK(Erle(mic, mic) == 0.0);
  std::vector<double> tenth = mic;
  for (double& v : tenth) v /= 10.0;
  CHECK(std::abs(Erle(mic, tenth) - 20.0) < 1e-12);
  CHECK(Erle(mic, std::vector<double>(1000, 0.0)) == kErleCapDb);
  for (double gain : {0.5, 2.0, 3.7}) {
    std::vector<double> scaled = tenth;
    for (double& v : scaled) v *= gain;
    CHECK(std::abs(Erle(mic, scaled) - (20.0 - 20.0 * std::log10(gain))) < 1e-10);
  }
  try {
    Erle(std::vector<double>(10, 0.0), std::vector<double>(10, 1.0));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("silent reference") != std::string::npos);
  }
  CHECK_THROWS_AS(Erle(mic, std::vector<double>(5)), Error);
}

TEST_CASE("delay sweep") {
  std::vector<SweepEntry> entries{{10, 5}, {20, 7}, {60, 3}, {170, 1}, {250, 9}, {-5, 4}};
  std::vector<std::string> warn;
  auto rows = DelaySweep(entries, 50, 0, 200, &warn);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].bucket_start_ms == 0);
  CHECK(rows[0].clips == 2);
  CHECK(rows[0].mean_erle_db == 6.0);
  CHECK(rows[1].bucket_start_ms == 50);
  CHECK(rows[2].bucket_start_ms == 150);
  REQUIRE(warn.size() == 1);
  CHECK(warn[0].find("[100, 150)") != std::string::npos);

  // identity model: 0 dB everywhere; oracle model: per-clip ratios
  std::vector<SweepEntry> identity;
  for (int k = 0; k < 20; ++k) {
    std::vector<double> d = Noise(500, k);
    identity.push_back({10.0 * k, Erle(d, d)});
  }
  for (const SweepRow& r : DelaySweep(identity, 50, 0, 200)) CHECK(r.mean_erle_db == 0.0);
  CHECK_THROWS_AS(DelaySweep(entries, 0, 0, 200), Error);
}
