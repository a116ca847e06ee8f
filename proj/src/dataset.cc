#include "sca_aec/dataset.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sca_aec/audio.h"
#include "sca_aec/error.h"
#include "sca_aec/rir.h"
#include "sca_aec/synth.h"

namespace sca_aec {

namespace fs = std::filesystem;

namespace {

double SumSq(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

LabeledClip ToyClip(std::uint64_t seed, TalkMode mode, const ToyDatasetConfig& cfg,
                    const std::string& id) {
  std::mt19937_64 rng(seed);
  const std::size_t n = static_cast<std::size_t>(std::lround(cfg.seconds * kSampleRate));
  std::vector<double> x = SynthSpeech(rng, n);
  const double gain =
      std::pow(10.0, std::uniform_real_distribution<double>(-cfg.far_level_db, cfg.far_level_db)(rng) / 20.0);
  for (double& v : x) v *= gain;
  std::vector<double> s = SynthSpeech(rng, n);
  const int k = std::uniform_int_distribution<int>(0, cfg.max_delay_frames)(rng);
  const std::size_t delay = static_cast<std::size_t>(k) * cfg.hop;
  std::vector<double> shifted(n, 0.0);
  for (std::size_t i = delay; i < n; ++i) shifted[i] = x[i - delay];
  std::vector<double> z = Convolve(shifted, MildRir(rng));
  z.resize(n);
  const double ez = SumSq(z);
  if (ez > 0.0) {
    const double g = std::sqrt(SumSq(s) / ez) / std::pow(10.0, cfg.ser_db / 20.0);
    for (double& v : z) v *= g;
  }
  if (mode == TalkMode::kFest) std::fill(s.begin(), s.end(), 0.0);
  if (mode == TalkMode::kNest) {
    std::fill(z.begin(), z.end(), 0.0);
    std::fill(x.begin(), x.end(), 0.0);
  }
  LabeledClip c;
  c.clip.id = id;
  c.clip.far = std::move(x);
  c.clip.mic.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.clip.mic[i] = s[i] + z[i];
  c.clip.target = std::move(s);
  c.mode = mode;
  c.true_delay_ms = 1000.0 * static_cast<double>(delay) / kSampleRate;
  return c;
}

std::string Required(const nlohmann::json& row, const char* key, std::size_t line) {
  if (!row.contains(key) || !row[key].is_string()) {
    FailData("index.jsonl line " + std::to_string(line) + ": missing '" + key + "'");
  }
  return row[key].get<std::string>();
}

}  // namespace

std::vector<double> MildRir(std::mt19937_64& rng, double sample_rate) {
  const std::size_t n = static_cast<std::size_t>(std::lround(0.06 * sample_rate));
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> h(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = g(rng) * std::exp(-static_cast<double>(i) / (0.01 * sample_rate)) * 0.05;
    if (i >= 48) h[i] = v;
  }
  h[0] += 1.0;
  return h;
}

ToyDataset MakeToyDataset(const ToyDatasetConfig& cfg) {
  static constexpr TalkMode kCycle[] = {TalkMode::kFest, TalkMode::kDt, TalkMode::kDt,
                                        TalkMode::kNest, TalkMode::kFest};
  ToyDataset d;
  for (std::size_t i = 0; i < cfg.train_clips; ++i) {
    LabeledClip c = ToyClip(DeriveSeed(cfg.seed, i), kCycle[i % 5], cfg, "train" + std::to_string(i));
    d.train.push_back(c.clip);
    d.train_labels.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < cfg.val_clips; ++i) {
    d.val.push_back(ToyClip(DeriveSeed(cfg.seed, 1000000 + i), kCycle[i % 5], cfg, "val" + std::to_string(i)).clip);
  }
  for (std::size_t i = 0; i < cfg.test_clips; ++i) {
    d.test.push_back(ToyClip(DeriveSeed(cfg.seed, 2000000 + i), TalkMode::kFest, cfg, "test" + std::to_string(i)));
  }
  return d;
}

nlohmann::json WriteExample(const std::string& dir, const std::string& id,
                            const AugmentedExample& ex) {
  fs::create_directories(dir);
  const fs::path base(dir);
  auto wav = [&](const char* kind, const std::vector<double>& x) {
    const std::string name = id + "." + kind + ".wav";
    WriteWav((base / name).string(), AudioClip{x, kSampleRate});
    return name;
  };
  nlohmann::json row = {{"id", id},
                        {"mic", wav("mic", ex.mic)},
                        {"far", wav("far", ex.far)},
                        {"target", wav("target", ex.target)},
                        {"mode", ToString(ex.spec.mode)},
                        {"true_delay_ms", 1000.0 * static_cast<double>(ex.true_delay_samples) / kSampleRate},
                        {"true_delay_samples", ex.true_delay_samples},
                        {"non_causal", ex.non_causal}};
  nlohmann::json sidecar = {{"id", id},
                            {"scenario", ToJson(ex.spec)},
                            {"true_delay_samples", ex.true_delay_samples},
                            {"non_causal", ex.non_causal},
                            {"delay_probabilities_renormalized", true}};
  if (std::isfinite(ex.realized_snr_db)) sidecar["realized_snr_db"] = ex.realized_snr_db;
  if (std::isfinite(ex.realized_ser_db)) sidecar["realized_ser_db"] = ex.realized_ser_db;
  std::ofstream(base / (id + ".json"), std::ios::trunc) << sidecar.dump(2) << '\n';
  return row;
}

void WriteIndex(const std::string& dir, const std::vector<nlohmann::json>& rows) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "index.jsonl", std::ios::trunc);
  if (!out) FailData("cannot write " + dir + "/index.jsonl");
  for (const auto& r : rows) out << r.dump() << '\n';
}

std::vector<LabeledClip> LoadDataset(const std::string& dir, std::vector<std::string>* warnings) {
  const fs::path index = fs::path(dir) / "index.jsonl";
  std::ifstream in(index);
  if (!in) FailData("dataset " + dir + " has no index.jsonl");
  std::vector<LabeledClip> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      FailData(index.string() + " line " + std::to_string(number) + ": " + e.what());
    }
    LabeledClip c;
    c.clip.id = row.value("id", "row" + std::to_string(number));
    c.clip.mic = ReadWav((fs::path(dir) / Required(row, "mic", number)).string()).samples;
    c.clip.far = ReadWav((fs::path(dir) / Required(row, "far", number)).string()).samples;
    if (row.contains("target")) {
      c.clip.target = ReadWav((fs::path(dir) / row["target"].get<std::string>()).string()).samples;
    }
    if (row.contains("mode") && row.contains("true_delay_ms")) {
      c.mode = ParseTalkMode(row["mode"].get<std::string>());
      c.true_delay_ms = row["true_delay_ms"].get<double>();
    } else {
      c.has_metadata = false;
      if (warnings) warnings->push_back("clip " + c.clip.id + ": no mode/delay metadata");
    }
    out.push_back(std::move(c));
  }
  return out;
}

void SplitTrainVal(const std::vector<LabeledClip>& all, double val_fraction,
                   std::vector<TrainClip>& train, std::vector<TrainClip>& val) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) FailUsage("val_fraction must lie in [0, 1)");
  const std::size_t k = val_fraction > 0.0 ? static_cast<std::size_t>(std::lround(1.0 / val_fraction)) : 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].clip.target.empty()) FailData("clip " + all[i].clip.id + " has no target for training");
    if (k > 0 && i % k == k - 1) val.push_back(all[i].clip);
    else train.push_back(all[i].clip);
  }
}

}  // namespace sca_aec
