#pragma once

// Training objective and echo-cancellation metrics.
//
//   L = alpha * sum_n |s^(n) - s(n)| + beta * sum_{t,k} w_k |S(s^)_{t,k} - S(s)_{t,k}|
//
// The spectral magnitude is the complex modulus of the difference. With
// `squared` both terms use squared magnitudes instead.

#include <map>
#include <string>
#include <vector>

#include "sca_aec/autograd.h"
#include "sca_aec/stft.h"

namespace sca_aec {

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  std::vector<double> w;  // per bin; when empty, uniform or low_frequency
  bool low_frequency = false;
  bool squared = false;

  // Throws if alpha/beta/w are negative or w has the wrong extent.
  std::vector<double> BinWeights(std::size_t bins) const;
};

// w_k = 1 / (1 + k / F), emphasizing low frequencies.
std::vector<double> LowFrequencyWeights(std::size_t bins);

struct LossTerms {
  double time = 0.0;      // alpha-weighted
  double spectral = 0.0;  // beta-weighted
  double total() const { return time + spectral; }
};

LossTerms AecLoss(const std::vector<double>& est, const std::vector<double>& target,
                  const LossWeights& weights, const StftConfig& cfg);

struct LossVars {
  Var time;
  Var spectral;
  Var total;
};

// est: [n] on the graph; target is constant.
LossVars AecLoss(Graph& g, Var est, const std::vector<double>& target, const LossWeights& weights,
                 const StftConfig& cfg);

inline constexpr double kErleCapDb = 100.0;

// 10 log10(sum mic^2 / sum enhanced^2), capped at kErleCapDb.
double Erle(const std::vector<double>& mic, const std::vector<double>& enhanced);

struct SweepRow {
  double bucket_start_ms = 0.0;
  double bucket_end_ms = 0.0;
  std::size_t clips = 0;
  double mean_erle_db = 0.0;
};

struct SweepEntry {
  double delay_ms = 0.0;
  double erle_db = 0.0;
};

// Groups entries into [k w, (k+1) w) delay buckets ordered by delay. Buckets
// are reported from `first_ms` to `last_ms`; empty ones are omitted and named
// in `warnings`.
std::vector<SweepRow> DelaySweep(const std::vector<SweepEntry>& entries, double bucket_ms,
                                 double first_ms, double last_ms,
                                 std::vector<std::string>* warnings = nullptr);

}  // namespace sca_aec
