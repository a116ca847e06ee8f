#include "sca_aec/eval.h"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "sca_aec/enhancer.h"
#include "sca_aec/error.h"

namespace sca_aec {

namespace {

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<ClipMetrics> Evaluate(const std::vector<LabeledClip>& clips, const Estimator& estimate,
                                  const LossWeights& weights, const StftConfig& stft,
                                  std::vector<std::string>* warnings) {
  std::vector<ClipMetrics> out;
  for (const LabeledClip& c : clips) {
    if (!c.has_metadata) {
      if (warnings) warnings->push_back("clip " + c.clip.id + " skipped: missing mode/delay metadata");
      continue;
    }
    const std::vector<double> est = estimate(c.clip);
    if (est.size() != c.clip.mic.size()) FailData("clip " + c.clip.id + ": estimate length differs from mic");
    ClipMetrics r;
    r.id = c.clip.id;
    r.mode = c.mode;
    r.true_delay_ms = c.true_delay_ms;
    if (c.mode == TalkMode::kFest) {
      double e = 0.0;
      for (double v : c.clip.mic) e += v * v;
      if (e > 0.0) {
        r.erle_db = Erle(c.clip.mic, est);
        r.has_erle = true;
      } else if (warnings) {
        warnings->push_back("clip " + c.clip.id + ": silent microphone, no ERLE");
      }
    }
    if (c.clip.target.size() == est.size()) {
      r.loss = AecLoss(est, c.clip.target, weights, stft);
      r.has_loss = true;
    }
    out.push_back(r);
  }
  return out;
}

Estimator ModelEstimator(ScaCrnModel& m, bool streaming, bool zero_mask, std::size_t chunk) {
  if (chunk == 0) FailUsage("chunk size must be positive");
  return [&m, streaming, zero_mask, chunk](const TrainClip& c) {
    if (!streaming) return EnhanceOffline(m, c.mic, c.far, zero_mask);
    StreamingEnhancer s(m, zero_mask);
    std::vector<double> out;
    for (std::size_t i = 0; i < c.mic.size(); i += chunk) {
      const std::size_t n = std::min(chunk, c.mic.size() - i);
      const auto part = s.Push(c.mic.data() + i, c.far.data() + i, n);
      out.insert(out.end(), part.begin(), part.end());
    }
    const auto tail = s.Flush();
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
  };
}

std::string MetricsJsonl(const std::vector<ClipMetrics>& rows) {
  std::string out;
  for (const ClipMetrics& r : rows) {
    nlohmann::json j = {{"id", r.id}, {"mode", ToString(r.mode)}, {"true_delay_ms", r.true_delay_ms}};
    if (r.has_erle) j["erle_db"] = r.erle_db;
    if (r.has_loss) {
      j["loss"] = r.loss.total();
      j["loss_time"] = r.loss.time;
      j["loss_spectral"] = r.loss.spectral;
    }
    out += j.dump() + "\n";
  }
  return out;
}

std::string AggregateCsv(const std::vector<ClipMetrics>& rows) {
  std::ostringstream os;
  os << "mode,clips,mean_loss,fest_clips,mean_erle_db\n";
  auto line = [&](const std::string& name, auto keep) {
    std::size_t n = 0, nl = 0, ne = 0;
    double loss = 0, erle = 0;
    for (const ClipMetrics& r : rows) {
      if (!keep(r)) continue;
      ++n;
      if (r.has_loss) {
        ++nl;
        loss += r.loss.total();
      }
      if (r.has_erle) {
        ++ne;
        erle += r.erle_db;
      }
    }
    os << name << ',' << n << ',' << (nl ? Num(loss / nl) : "") << ',' << ne << ','
       << (ne ? Num(erle / ne) : "") << '\n';
  };
  for (TalkMode m : {TalkMode::kFest, TalkMode::kNest, TalkMode::kDt}) {
    line(ToString(m), [m](const ClipMetrics& r) { return r.mode == m; });
  }
  line("all", [](const ClipMetrics&) { return true; });
  return os.str();
}

std::vector<SweepRow> SweepFromMetrics(const std::vector<ClipMetrics>& rows, const SweepSpec& spec,
                                       std::vector<std::string>* warnings) {
  std::vector<SweepEntry> entries;
  for (const ClipMetrics& r : rows)
    if (r.has_erle) entries.push_back({r.true_delay_ms, r.erle_db});
  return DelaySweep(entries, spec.bucket_ms, spec.first_ms, spec.last_ms, warnings);
}

std::string SweepCsv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "bucket_start_ms,bucket_end_ms,clips,mean_erle_db\n";
  for (const SweepRow& r : rows) {
    os << Num(r.bucket_start_ms) << ',' << Num(r.bucket_end_ms) << ',' << r.clips << ','
       << Num(r.mean_erle_db) << '\n';
  }
  return os.str();
}

double MeanOverBuckets(const std::vector<SweepRow>& rows, double lo_ms, double hi_ms) {
  double sum = 0;
  std::size_t n = 0;
  for (const SweepRow& r : rows) {
    if (r.bucket_start_ms < lo_ms || r.bucket_start_ms > hi_ms) continue;
    sum += r.mean_erle_db;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

}  // namespace sca_aec
