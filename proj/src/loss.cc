#include "sca_aec/loss.h"

#include <cmath>
#include <sstream>

#include "sca_aec/error.h"
#include "sca_aec/ops.h"

namespace sca_aec {

std::vector<double> LossWeights::BinWeights(std::size_t bins) const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) FailUsage("loss: alpha and beta must be >= 0");
  if (w.empty()) return low_frequency ? LowFrequencyWeights(bins) : std::vector<double>(bins, 1.0);
  if (w.size() != bins) {
    FailUsage("loss: " + std::to_string(w.size()) + " spectral weights for " +
              std::to_string(bins) + " bins");
  }
  for (double v : w)
    if (!(v >= 0.0)) FailUsage("loss: spectral weights must be >= 0");
  return w;
}

std::vector<double> LowFrequencyWeights(std::size_t bins) {
  std::vector<double> w(bins);
  for (std::size_t k = 0; k < bins; ++k) w[k] = 1.0 / (1.0 + static_cast<double>(k) / bins);
  return w;
}

namespace {

void RequireEqualLength(std::size_t a, std::size_t b) {
  if (a != b) {
    FailData("loss: estimate has " + std::to_string(a) + " samples, target " + std::to_string(b));
  }
}

}  // namespace

LossTerms AecLoss(const std::vector<double>& est, const std::vector<double>& target,
                  const LossWeights& weights, const StftConfig& cfg) {
  RequireEqualLength(est.size(), target.size());
  const std::vector<double> w = weights.BinWeights(cfg.bins());
  LossTerms out;
  double t = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double d = est[i] - target[i];
    t += weights.squared ? d * d : std::abs(d);
  }
  out.time = weights.alpha * t;
  const Spectrogram a = Stft(est, cfg), b = Stft(target, cfg);
  const std::size_t F = cfg.bins();
  double s = 0.0;
  for (std::size_t i = 0; i < a.real.size(); ++i) {
    const double dr = a.real[i] - b.real[i], di = a.imag[i] - b.imag[i];
    const double m2 = dr * dr + di * di;
    s += w[i % F] * (weights.squared ? m2 : std::hypot(dr, di));
  }
  out.spectral = weights.beta * s;
  return out;
}

LossVars AecLoss(Graph& g, Var est, const std::vector<double>& target, const LossWeights& weights,
                 const StftConfig& cfg) {
  if (est.shape().size() != 1) FailUsage("loss: estimate must be a 1-d signal");
  RequireEqualLength(est.shape()[0], target.size());
  const Tensor w(Shape{cfg.bins()}, weights.BinWeights(cfg.bins()));
  Var tgt = g.Constant(Tensor(Shape{target.size()}, target));
  Var diff = ops::Sub(est, tgt);
  LossVars out;
  out.time = ops::Scale(weights.squared ? ops::SumSquares(diff) : ops::SumAbs(diff), weights.alpha);
  Var sd = ops::Sub(StftOp(est, cfg), g.Constant(Stft(target, cfg).Planes()));
  Var spec = weights.squared ? ops::WeightedComplexSquareSum(sd, w) : ops::WeightedComplexAbsSum(sd, w);
  out.spectral = ops::Scale(spec, weights.beta);
  out.total = ops::Add(out.time, out.spectral);
  return out;
}

double Erle(const std::vector<double>& mic, const std::vector<double>& enhanced) {
  if (mic.size() != enhanced.size()) {
    FailData("erle: mic has " + std::to_string(mic.size()) + " samples, enhanced " +
             std::to_string(enhanced.size()));
  }
  double em = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < mic.size(); ++i) {
    em += mic[i] * mic[i];
    ee += enhanced[i] * enhanced[i];
  }
  if (!(em > 0.0)) FailData("erle: silent reference");
  if (ee < 1e-20 * em) return kErleCapDb;
  return std::min(kErleCapDb, 10.0 * std::log10(em / ee));
}

std::vector<SweepRow> DelaySweep(const std::vector<SweepEntry>& entries, double bucket_ms,
                                 double first_ms, double last_ms,
                                 std::vector<std::string>* warnings) {
  if (!(bucket_ms > 0.0)) FailUsage("delay sweep: bucket width must be positive");
  std::map<long, std::pair<std::size_t, double>> acc;
  for (const SweepEntry& e : entries) {
    if (e.delay_ms < first_ms || e.delay_ms >= last_ms) continue;
    const long k = static_cast<long>(std::floor((e.delay_ms - first_ms) / bucket_ms));
    auto& slot = acc[k];
    ++slot.first;
    slot.second += e.erle_db;
  }
  std::vector<SweepRow> rows;
  const long buckets = static_cast<long>(std::ceil((last_ms - first_ms) / bucket_ms));
  for (long k = 0; k < buckets; ++k) {
    SweepRow r;
    r.bucket_start_ms = first_ms + k * bucket_ms;
    r.bucket_end_ms = r.bucket_start_ms + bucket_ms;
    auto it = acc.find(k);
    if (it == acc.end()) {
      if (warnings) {
        std::ostringstream os;
        os << "delay bucket [" << r.bucket_start_ms << ", " << r.bucket_end_ms
           << ") ms is empty; omitted";
        warnings->push_back(os.str());
      }
      continue;
    }
    r.clips = it->second.first;
    r.mean_erle_db = it->second.second / static_cast<double>(r.clips);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace sca_aec
