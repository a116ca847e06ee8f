#pragma once

// Dataset evaluation: per-clip metrics, aggregates by talk mode and the
// delay-sweep table. Any estimator (trained model, oracle, identity) can be
// evaluated through the same path.

#include <functional>
#include <string>
#include <vector>

#include "sca_aec/dataset.h"
#include "sca_aec/loss.h"

namespace sca_aec {

using Estimator = std::function<std::vector<double>(const TrainClip&)>;

struct ClipMetrics {
  std::string id;
  TalkMode mode = TalkMode::kDt;
  double true_delay_ms = 0.0;
  double erle_db = 0.0;  // FEST only
  bool has_erle = false;
  bool has_loss = false;  // needs a target
  LossTerms loss;
};

// Clips without metadata are skipped with a warning. Order follows `clips`.
std::vector<ClipMetrics> Evaluate(const std::vector<LabeledClip>& clips, const Estimator& estimate,
                                  const LossWeights& weights, const StftConfig& stft,
                                  std::vector<std::string>* warnings = nullptr);

Estimator ModelEstimator(ScaCrnModel& m, bool streaming = false, bool zero_mask = false,
                         std::size_t chunk = 4800);

// One JSON object per line.
std::string MetricsJsonl(const std::vector<ClipMetrics>& rows);
// mode,clips,mean_loss,fest_clips,mean_erle_db (rows for FEST, NEST, DT, all)
std::string AggregateCsv(const std::vector<ClipMetrics>& rows);

struct SweepSpec {
  double bucket_ms = 50.0;
  double first_ms = 0.0;
  double last_ms = 250.0;
};

std::vector<SweepRow> SweepFromMetrics(const std::vector<ClipMetrics>& rows, const SweepSpec& spec,
                                       std::vector<std::string>* warnings = nullptr);
std::string SweepCsv(const std::vector<SweepRow>& rows);
// Mean of bucket means for buckets starting in [lo, hi].
double MeanOverBuckets(const std::vector<SweepRow>& rows, double lo_ms, double hi_ms);

}  // namespace sca_aec
