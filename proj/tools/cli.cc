#include "sca_aec/cli.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "sca_aec/augment.h"
#include "sca_aec/checkpoint.h"
#include "sca_aec/config_io.h"
#include "sca_aec/dataset.h"
#include "sca_aec/enhancer.h"
#include "sca_aec/error.h"
#include "sca_aec/eval.h"
#include "sca_aec/gcc.h"
#include "sca_aec/rir.h"
#include "sca_aec/synth.h"
#include "sca_aec/trainer.h"

namespace sca_aec {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t ThreadBudget() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SCA_AEC_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) FailUsage("SCA_AEC_THREADS must be a positive integer");
    n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

namespace {

// Flag if given, else config value, else default.
template <class T>
T Layer(const CLI::Option* opt, const T& flag, const json& section, const char* key, const T& def) {
  if (opt && opt->count() > 0) return flag;
  if (section.is_object() && section.contains(key)) {
    try {
      return section[key].get<T>();
    } catch (const json::exception& e) {
      FailUsage(std::string("config key '") + key + "': " + e.what());
    }
  }
  return def;
}

json Section(const json& cfg, const char* name) {
  if (cfg.contains(name)) {
    if (!cfg[name].is_object()) FailUsage(std::string("config section '") + name + "' must be an object");
    return cfg[name];
  }
  return json::object();
}

json LoadConfig(const std::string& path, std::initializer_list<const char*> allowed) {
  if (path.empty()) return json::object();
  json cfg = ReadJsonFile(path);
  if (!cfg.is_object()) FailUsage("config " + path + " must hold a JSON object");
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) FailUsage("config " + path + ": unknown key '" + it.key() + "'");
  }
  return cfg;
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) FailData("cannot write " + path.string());
  out << text;
}

double Ms(long samples) { return 1000.0 * static_cast<double>(samples) / kSampleRate; }

std::vector<double> ReadSignal(const std::string& path) { return ReadWav(path).samples; }

fs::path Resolve(const fs::path& base, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

json GccJson(const GccConfig& c) {
  return {{"weighting", c.weighting == GccWeighting::kPhat ? "phat" : "none"},
          {"block_len", c.block_len},
          {"max_delay", c.max_delay},
          {"smoothing", c.smoothing}};
}

// Copies weights into a model that differs only in look-ahead.
std::unique_ptr<ScaCrnModel> WithLookahead(ScaCrnModel& src, std::size_t lookahead) {
  ModelConfig cfg = src.config();
  cfg.lookahead = lookahead;
  auto dst = std::make_unique<ScaCrnModel>(cfg);
  auto ps = src.Parameters(), pd = dst->Parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) pd[i]->value = ps[i]->value;
  auto bs = src.Buffers(), bd = dst->Buffers();
  for (std::size_t i = 0; i < bs.size(); ++i) *bd[i].second = *bs[i].second;
  return dst;
}

template <class F>
void ParallelFor(std::size_t n, std::size_t threads, F&& f) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) f(i);
    });
  }
  for (std::thread& th : pool) th.join();
}

// ---------------------------------------------------------------- synth-corpus

struct SynthArgs {
  std::string out;
  std::size_t count = 4;
  double seconds = 4.0;
  std::uint64_t seed = 0;
};

int CmdSynth(const SynthArgs& a, std::ostream& out) {
  if (a.count == 0) FailUsage("synth-corpus: --count must be positive");
  if (!(a.seconds > 0.0)) FailUsage("synth-corpus: --seconds must be positive");
  const fs::path dir(a.out);
  fs::create_directories(dir);
  const std::size_t n = static_cast<std::size_t>(std::lround(a.seconds * kSampleRate));
  const std::size_t lead = kSampleRate / 10;  // covers negative delays
  std::string manifest;
  for (std::size_t i = 0; i < a.count; ++i) {
    std::mt19937_64 rng(DeriveSeed(a.seed, i));
    char id[32];
    std::snprintf(id, sizeof id, "%04zu", i);
    const std::string near = std::string("near_") + id + ".wav", far = std::string("far_") + id + ".wav",
                      noise = std::string("noise_") + id + ".wav";
    WriteWav((dir / near).string(), AudioClip{SynthSpeech(rng, n), kSampleRate});
    WriteWav((dir / far).string(), AudioClip{SynthSpeech(rng, n + lead), kSampleRate});
    WriteWav((dir / noise).string(), AudioClip{SynthNoise(rng, n), kSampleRate});
    manifest += json{{"near_wav", near}, {"far_wav", far}, {"noise_wav", noise}}.dump() + "\n";
  }
  WriteText(dir / "manifest.jsonl", manifest);
  out << "wrote " << a.count << " source triples to " << (dir / "manifest.jsonl").string() << "\n";
  return 0;
}

// --------------------------------------------------------------------- augment

struct AugmentArgs {
  std::string manifest, out, config;
  std::size_t count = 10;
  double clip_seconds = 4.0;
  std::uint64_t seed = 0;
  CLI::Option *count_opt = nullptr, *clip_opt = nullptr, *seed_opt = nullptr;
};

struct Sources {
  std::vector<double> near, far, noise;
};

Sources LoadSources(const json& row, const fs::path& base) {
  auto path = [&](const char* key) {
    if (!row.contains(key) || !row[key].is_string()) FailData(std::string("missing field '") + key + "'");
    return Resolve(base, row[key].get<std::string>()).string();
  };
  Sources s;
  s.near = ReadSignal(path("near_wav"));
  s.far = ReadSignal(path("far_wav"));
  s.noise = ReadSignal(path("noise_wav"));
  return s;
}

std::string BucketSummary(const std::vector<ScenarioSpec>& specs) {
  std::ostringstream os;
  os << "table,bucket,lo,hi,count,fraction,expected\n";
  auto table = [&](const char* name, const BucketTable& t, auto value) {
    std::vector<std::size_t> counts(t.probs.size(), 0);
    for (const ScenarioSpec& s : specs) ++counts[t.Bucket(value(s))];
    for (std::size_t b = 0; b < counts.size(); ++b) {
      os << name << ',' << b << ',' << t.edges[b] << ',' << t.edges[b + 1] << ',' << counts[b] << ','
         << (specs.empty() ? 0.0 : static_cast<double>(counts[b]) / specs.size()) << ',' << t.probs[b] << '\n';
    }
  };
  table("rt60_s", Rt60Buckets(), [](const ScenarioSpec& s) { return s.rt60_s; });
  table("delay_ms", DelayBuckets(), [](const ScenarioSpec& s) { return s.delay_ms; });
  table("snr_db", SnrBuckets(), [](const ScenarioSpec& s) { return s.snr_db; });
  table("ser_db", SerBuckets(), [](const ScenarioSpec& s) { return s.ser_db; });
  return os.str();
}

int CmdAugment(const AugmentArgs& a, std::ostream& out, std::ostream& err) {
  const json cfg = LoadConfig(a.config, {"seed", "augment"});
  const json sec = Section(cfg, "augment");
  const std::uint64_t seed = Layer<std::uint64_t>(a.seed_opt, a.seed, cfg, "seed", 0);
  const std::size_t count = Layer<std::size_t>(a.count_opt, a.count, sec, "count", 10);
  const double clip_s = Layer<double>(a.clip_opt, a.clip_seconds, sec, "clip_seconds", 4.0);
  SamplerConfig sampler;
  sampler.max_epc_probability = sec.value("max_epc_probability", sampler.max_epc_probability);
  sampler.epc_rate_per_s = sec.value("epc_rate_per_s", sampler.epc_rate_per_s);
  if (count == 0) FailUsage("augment: --count must be positive");
  if (!(clip_s > 0.0)) FailUsage("augment: --clip-seconds must be positive");

  std::ifstream in(a.manifest);
  if (!in) FailData("cannot open manifest " + a.manifest);
  std::vector<json> rows;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      FailData("manifest line " + std::to_string(number) + ": " + e.what());
    }
  }
  if (rows.empty()) FailData("manifest " + a.manifest + " has no rows");
  const fs::path base = fs::path(a.manifest).parent_path();
  const fs::path dir(a.out);
  fs::create_directories(dir);

  struct Result {
    std::optional<json> row;
    ScenarioSpec spec;
    std::string error;
  };
  std::vector<Result> results(count);
  const std::size_t clip_n = static_cast<std::size_t>(std::lround(clip_s * kSampleRate));
  ParallelFor(count, ThreadBudget(), [&](std::size_t i) {
    Result& r = results[i];
    try {
      Sources src = LoadSources(rows[i % rows.size()], base);
      const std::size_t n = std::min(clip_n, src.near.size());
      if (n == 0) FailData("near-end clip is empty");
      src.near.resize(n);
      if (src.noise.empty()) FailData("noise clip is empty");
      std::vector<double> noise(n);
      for (std::size_t k = 0; k < n; ++k) noise[k] = src.noise[k % src.noise.size()];
      SamplerConfig sc = sampler;
      sc.clip_s = static_cast<double>(n) / kSampleRate;
      const std::uint64_t example_seed = DeriveSeed(seed, i);
      ScenarioSpec spec = SampleScenario(example_seed, sc);
      std::mt19937_64 room_rng(DeriveSeed(example_seed, 1));
      const RoomSpec room = SampleRoom(room_rng, spec.rt60_s);
      const AugmentedExample ex = RenderExample(spec, src.near, src.far, noise, ImageMethodRir(room));
      char id[32];
      std::snprintf(id, sizeof id, "ex%05zu", i);
      json row = WriteExample(dir.string(), id, ex);
      row["source_row"] = i % rows.size();
      row["rt60_s"] = spec.rt60_s;
      row["snr_db"] = spec.snr_db;
      row["ser_db"] = spec.ser_db;
      row["delay_ms"] = spec.delay_ms;
      r.row = row;
      r.spec = spec;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kData) throw;
      r.error = e.what();
    }
  });

  std::vector<json> index;
  std::vector<ScenarioSpec> specs;
  std::string errors;
  for (std::size_t i = 0; i < count; ++i) {
    if (results[i].row) {
      index.push_back(*results[i].row);
      specs.push_back(results[i].spec);
    } else {
      errors += json{{"example", i}, {"manifest_row", i % rows.size()}, {"error", results[i].error}}.dump() + "\n";
      err << "augment: example " << i << " (manifest row " << i % rows.size() << "): " << results[i].error << "\n";
    }
  }
  WriteIndex(dir.string(), index);
  WriteText(dir / "summary.csv", BucketSummary(specs));
  WriteText(dir / "errors.jsonl", errors);
  json resolved = {{"command", "augment"},
                   {"manifest", a.manifest},
                   {"seed", seed},
                   {"augment",
                    {{"count", count},
                     {"clip_seconds", clip_s},
                     {"max_epc_probability", sampler.max_epc_probability},
                     {"epc_rate_per_s", sampler.epc_rate_per_s}}},
                   {"delay_probabilities_renormalized", true}};
  WriteJsonFile((dir / "resolved_config.json").string(), resolved);
  if (index.empty()) FailData("augment: every example failed; see errors.jsonl");
  out << "rendered " << index.size() << " of " << count << " examples into " << dir.string() << "\n";
  return 0;
}

// ----------------------------------------------------------------------- train

struct TrainArgs {
  std::string data, out, config, resume, attention;
  std::uint64_t seed = 0;
  int epochs = 10;
  std::size_t batch = 4, d = 16, heads = 2, lookahead = 0, lstm_hidden = 64;
  double lr = 1e-3, val_fraction = 0.1;
  bool verbose = false;
  CLI::Option *seed_opt, *epochs_opt, *batch_opt, *lr_opt, *val_opt, *attention_opt, *d_opt, *heads_opt,
      *lookahead_opt, *lstm_opt;
};

int CmdTrain(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const json cfg = LoadConfig(a.config, {"seed", "model", "loss", "train"});
  const json tsec = Section(cfg, "train");
  const json msec = Section(cfg, "model");
  const std::uint64_t seed = Layer<std::uint64_t>(a.seed_opt, a.seed, cfg, "seed", 0);

  TrainConfig tc;
  tc.epochs = Layer<int>(a.epochs_opt, a.epochs, tsec, "epochs", tc.epochs);
  tc.batch = Layer<std::size_t>(a.batch_opt, a.batch, tsec, "batch", tc.batch);
  tc.adam.lr = Layer<double>(a.lr_opt, a.lr, tsec, "lr", tc.adam.lr);
  tc.adam.clip_norm = tsec.value("clip_norm", tc.adam.clip_norm);
  tc.bn_momentum = tsec.value("bn_momentum", tc.bn_momentum);
  tc.seed = seed;
  tc.threads = ThreadBudget();
  tc.out_dir = a.out;
  tc.verbose = a.verbose;
  tc.loss = LossWeightsFromJson(Section(cfg, "loss"));
  const double val_fraction = Layer<double>(a.val_opt, a.val_fraction, tsec, "val_fraction", 0.1);

  std::vector<std::string> warnings;
  const auto all = LoadDataset(a.data, &warnings);
  for (const auto& w : warnings) err << "train: " << w << "\n";
  std::vector<TrainClip> train, val;
  SplitTrainVal(all, val_fraction, train, val);

  std::unique_ptr<ScaCrnModel> model;
  CheckpointExtras extras;
  if (!a.resume.empty()) {
    model = LoadCheckpoint(a.resume, &extras);
  } else {
    ModelConfig mc = ModelConfigFromJson(msec);
    if (a.attention_opt->count()) mc.attention = ParseAttentionMode(a.attention);
    if (a.d_opt->count()) mc.d = a.d;
    if (a.heads_opt->count()) mc.heads = a.heads;
    if (a.lookahead_opt->count()) mc.lookahead = a.lookahead;
    if (a.lstm_opt->count()) mc.lstm_hidden = a.lstm_hidden;
    if (a.seed_opt->count() || !msec.contains("seed")) mc.seed = seed;
    mc.Validate();
    model = std::make_unique<ScaCrnModel>(mc);
  }
  Trainer trainer(*model, tc);
  if (!a.resume.empty()) trainer.Restore(extras);

  json resolved = {{"command", "train"},
                   {"data", a.data},
                   {"seed", seed},
                   {"resume", a.resume},
                   {"model", ToJson(model->config())},
                   {"loss", ToJson(tc.loss)},
                   {"train",
                    {{"epochs", tc.epochs},
                     {"batch", tc.batch},
                     {"lr", tc.adam.lr},
                     {"clip_norm", tc.adam.clip_norm},
                     {"bn_momentum", tc.bn_momentum},
                     {"val_fraction", val_fraction}}}};
  fs::create_directories(a.out);
  WriteJsonFile((fs::path(a.out) / "resolved_config.json").string(), resolved);

  const auto ran = trainer.Fit(train, val);
  out << "trained " << ran.size() << " epochs on " << train.size() << " clips (" << val.size()
      << " validation); best epoch score " << trainer.best_val() << "\n";
  return 0;
}

// ----------------------------------------------------------------------- infer

struct InferArgs {
  std::string checkpoint, mic, far, out;
  bool streaming = false, offline = false, zero_mask = false, pcm16 = false;
  std::size_t lookahead = 0, chunk = 480;
  CLI::Option* lookahead_opt = nullptr;
};

int CmdInfer(const InferArgs& a, std::ostream& out) {
  if (a.chunk == 0) FailUsage("infer: --chunk must be positive");
  auto model = LoadCheckpoint(a.checkpoint);
  if (a.lookahead_opt->count()) model = WithLookahead(*model, a.lookahead);
  const AudioClip mic = ReadWav(a.mic), far = ReadWav(a.far);
  if (mic.sample_rate != far.sample_rate) FailData("infer: mic and far sample rates differ");
  if (mic.samples.size() != far.samples.size()) FailData("infer: mic and far lengths differ");
  const bool streaming = !a.offline;
  TrainClip clip{"input", mic.samples, far.samples, {}};
  const std::vector<double> enhanced = ModelEstimator(*model, streaming, a.zero_mask, a.chunk)(clip);
  WriteWav(a.out, AudioClip{enhanced, kSampleRate}, a.pcm16 ? WavEncoding::kPcm16 : WavEncoding::kFloat32);
  json resolved = {{"command", "infer"},   {"checkpoint", a.checkpoint}, {"mic", a.mic},
                   {"far", a.far},         {"mode", streaming ? "streaming" : "offline"},
                   {"chunk", a.chunk},     {"zero_mask", a.zero_mask},   {"model", ToJson(model->config())},
                   {"encoding", a.pcm16 ? "pcm16" : "float32"}};
  WriteJsonFile(a.out + ".config.json", resolved);
  out << "wrote " << enhanced.size() << " samples to " << a.out << "\n";
  return 0;
}

// ----------------------------------------------------------------------- align

struct AlignArgs {
  std::string mic, far, out, aligned, weighting = "phat", config;
  bool streaming = false;
  long max_delay = 28800;
  std::size_t block = 4096;
  double smoothing = 0.9;
  CLI::Option *max_opt, *block_opt, *smooth_opt, *weight_opt;
};

int CmdAlign(const AlignArgs& a, std::ostream& out) {
  const json cfg = LoadConfig(a.config, {"gcc"});
  const json sec = Section(cfg, "gcc");
  GccConfig g;
  const std::string weighting = Layer<std::string>(a.weight_opt, a.weighting, sec, "weighting", "phat");
  if (weighting == "phat") g.weighting = GccWeighting::kPhat;
  else if (weighting == "none") g.weighting = GccWeighting::kNone;
  else FailUsage("align: weighting must be phat or none");
  g.max_delay = Layer<long>(a.max_opt, a.max_delay, sec, "max_delay", g.max_delay);
  g.block_len = Layer<std::size_t>(a.block_opt, a.block, sec, "block_len", g.block_len);
  g.smoothing = Layer<double>(a.smooth_opt, a.smoothing, sec, "smoothing", g.smoothing);
  g.Validate();
  const std::vector<double> mic = ReadSignal(a.mic), far = ReadSignal(a.far);
  if (mic.size() != far.size()) FailData("align: mic and far lengths differ");

  std::string rows;
  auto emit = [&](const DelayEstimate& e, json extra) {
    extra["delay_samples"] = e.delay_samples;
    extra["delay_ms"] = Ms(e.delay_samples);
    extra["confidence"] = e.confidence;
    rows += extra.dump() + "\n";
  };
  long final_delay = 0;
  if (a.streaming) {
    StreamingGcc s(g);
    const auto est = s.Push(mic, far);
    for (std::size_t b = 0; b < est.size(); ++b) emit(est[b], {{"block", b}, {"end_sample", (b + 1) * g.block_len}});
    if (s.current()) final_delay = s.current()->delay_samples;
  } else {
    const DelayEstimate e = GlobalGccDelay(mic, far, g);
    emit(e, json::object());
    final_delay = e.delay_samples;
  }
  if (a.out.empty()) out << rows;
  else WriteText(a.out, rows);
  if (!a.aligned.empty()) WriteWav(a.aligned, AudioClip{AlignByShift(far, final_delay), kSampleRate});
  if (!a.out.empty()) {
    json resolved = {{"command", "align"}, {"mic", a.mic}, {"far", a.far},
                     {"mode", a.streaming ? "streaming" : "global"}, {"gcc", GccJson(g)}};
    WriteJsonFile(a.out + ".config.json", resolved);
  }
  return 0;
}

// ------------------------------------------------------------ eval/sweep-delay

struct EvalArgs {
  std::string checkpoint, data, out, estimator = "model", config;
  bool streaming = false;
  std::size_t chunk = 4800;
  double bucket_ms = 50.0, first_ms = 0.0, last_ms = 250.0;
  CLI::Option *bucket_opt, *first_opt, *last_opt;
};

int CmdEval(const EvalArgs& a, bool sweep_only, std::ostream& out, std::ostream& err) {
  const json cfg = LoadConfig(a.config, {"loss", "sweep"});
  const json sec = Section(cfg, "sweep");
  SweepSpec sweep;
  sweep.bucket_ms = Layer<double>(a.bucket_opt, a.bucket_ms, sec, "bucket_ms", sweep.bucket_ms);
  sweep.first_ms = Layer<double>(a.first_opt, a.first_ms, sec, "first_ms", sweep.first_ms);
  sweep.last_ms = Layer<double>(a.last_opt, a.last_ms, sec, "last_ms", sweep.last_ms);
  const LossWeights weights = LossWeightsFromJson(Section(cfg, "loss"));

  std::unique_ptr<ScaCrnModel> model;
  Estimator est;
  StftConfig stft = StftConfig::Default();
  if (a.estimator == "model") {
    if (a.checkpoint.empty()) FailUsage("--checkpoint is required with --estimator model");
    model = LoadCheckpoint(a.checkpoint);
    stft = model->config().stft;
    est = ModelEstimator(*model, a.streaming, false, a.chunk);
  } else if (a.estimator == "identity") {
    est = [](const TrainClip& c) { return c.mic; };
  } else if (a.estimator == "oracle") {
    est = [](const TrainClip& c) {
      if (c.target.size() != c.mic.size()) FailData("clip " + c.id + " has no target for the oracle");
      return c.target;
    };
  } else {
    FailUsage("--estimator must be model, identity or oracle");
  }

  std::vector<std::string> warnings;
  const auto clips = LoadDataset(a.data, &warnings);
  std::vector<ClipMetrics> metrics;
  if (model) {
    // clips are independent; each worker owns a model copy
    std::vector<std::optional<ClipMetrics>> slots(clips.size());
    std::vector<std::string> skipped(clips.size());
    const std::size_t threads = std::min(ThreadBudget(), clips.size());
    std::vector<std::unique_ptr<ScaCrnModel>> copies;
    for (std::size_t t = 0; t < std::max<std::size_t>(1, threads); ++t) copies.push_back(WithLookahead(*model, model->config().lookahead));
    ParallelFor(clips.size(), threads, [&](std::size_t i) {
      std::vector<std::string> w;
      const auto r = Evaluate({clips[i]}, ModelEstimator(*copies[i % copies.size()], a.streaming, false, a.chunk),
                              weights, stft, &w);
      if (!r.empty()) slots[i] = r[0];
      if (!w.empty()) skipped[i] = w[0];
    });
    for (std::size_t i = 0; i < clips.size(); ++i) {
      if (slots[i]) metrics.push_back(*slots[i]);
      if (!skipped[i].empty()) warnings.push_back(skipped[i]);
    }
  } else {
    metrics = Evaluate(clips, est, weights, stft, &warnings);
  }
  const auto table = SweepFromMetrics(metrics, sweep, &warnings);
  for (const auto& w : warnings) err << "eval: " << w << "\n";

  const fs::path dir(a.out);
  fs::create_directories(dir);
  WriteText(dir / "sweep.csv", SweepCsv(table));
  if (!sweep_only) {
    WriteText(dir / "metrics.jsonl", MetricsJsonl(metrics));
    WriteText(dir / "aggregate.csv", AggregateCsv(metrics));
  }
  json resolved = {{"command", sweep_only ? "sweep-delay" : "eval"},
                   {"data", a.data},
                   {"checkpoint", a.checkpoint},
                   {"estimator", a.estimator},
                   {"mode", a.streaming ? "streaming" : "offline"},
                   {"loss", ToJson(weights)},
                   {"sweep", {{"bucket_ms", sweep.bucket_ms}, {"first_ms", sweep.first_ms}, {"last_ms", sweep.last_ms}}}};
  WriteJsonFile((dir / (sweep_only ? "sweep_config.json" : "resolved_config.json")).string(), resolved);
  if (sweep_only) out << SweepCsv(table);
  else out << "evaluated " << metrics.size() << " clips; " << AggregateCsv(metrics);
  return 0;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming acoustic echo cancellation toolkit", "sca-aec"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-corpus", "Write synthetic near/far/noise sources and a manifest");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--count", synth.count, "Number of source triples");
  s->add_option("--seconds", synth.seconds, "Near-end length in seconds");
  s->add_option("--seed", synth.seed, "Master seed");

  AugmentArgs aug;
  auto* a = app.add_subcommand("augment", "Render augmented examples from a source manifest");
  a->add_option("--manifest", aug.manifest, "JSONL rows {near_wav, far_wav, noise_wav}")->required();
  a->add_option("--out", aug.out, "Dataset directory")->required();
  a->add_option("--config", aug.config, "JSON config file");
  aug.count_opt = a->add_option("--count", aug.count, "Examples to render");
  aug.clip_opt = a->add_option("--clip-seconds", aug.clip_seconds, "Example length");
  aug.seed_opt = a->add_option("--seed", aug.seed, "Master seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a dataset directory");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--config", tr.config, "JSON config file");
  t->add_option("--resume", tr.resume, "Checkpoint to continue from (last.ckpt)");
  tr.seed_opt = t->add_option("--seed", tr.seed, "Master seed");
  tr.epochs_opt = t->add_option("--epochs", tr.epochs, "Total epochs");
  tr.batch_opt = t->add_option("--batch", tr.batch, "Clips per update");
  tr.lr_opt = t->add_option("--lr", tr.lr, "Adam learning rate");
  tr.val_opt = t->add_option("--val-fraction", tr.val_fraction, "Share of clips held out");
  tr.attention_opt = t->add_option("--attention", tr.attention, "sca, nca or none");
  tr.d_opt = t->add_option("--d", tr.d, "Embedding size");
  tr.heads_opt = t->add_option("--heads", tr.heads, "Attention heads");
  tr.lookahead_opt = t->add_option("--lookahead", tr.lookahead, "Attention look-ahead frames");
  tr.lstm_opt = t->add_option("--lstm-hidden", tr.lstm_hidden, "LSTM width");
  t->add_flag("--verbose", tr.verbose, "Per-epoch progress on stderr");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Enhance one mic/far pair");
  i->add_option("--checkpoint", inf.checkpoint, "Model checkpoint")->required();
  i->add_option("--mic", inf.mic, "Microphone WAV")->required();
  i->add_option("--far", inf.far, "Far-end WAV")->required();
  i->add_option("--out", inf.out, "Output WAV")->required();
  auto* st = i->add_flag("--streaming", inf.streaming, "Chunked streaming inference (default)");
  auto* off = i->add_flag("--offline", inf.offline, "Whole-clip inference");
  st->excludes(off);
  inf.lookahead_opt = i->add_option("--lookahead", inf.lookahead, "Override attention look-ahead frames");
  i->add_option("--chunk", inf.chunk, "Streaming chunk in samples");
  i->add_flag("--zero-mask", inf.zero_mask, "Debug: force a zero mask");
  i->add_flag("--pcm16", inf.pcm16, "Write 16-bit PCM instead of float32");

  AlignArgs al;
  auto* g = app.add_subcommand("align", "Estimate the mic/far delay with GCC");
  g->add_option("--mic", al.mic, "Microphone WAV")->required();
  g->add_option("--far", al.far, "Far-end WAV")->required();
  g->add_option("--out", al.out, "JSONL estimates (default stdout)");
  g->add_option("--aligned", al.aligned, "Write the shifted far-end WAV");
  g->add_option("--config", al.config, "JSON config file");
  g->add_flag("--streaming", al.streaming, "Per-block streaming estimates");
  al.weight_opt = g->add_option("--weighting", al.weighting, "phat or none");
  al.max_opt = g->add_option("--max-delay", al.max_delay, "Search range in samples");
  al.block_opt = g->add_option("--block", al.block, "Streaming block length");
  al.smooth_opt = g->add_option("--smoothing", al.smoothing, "Streaming smoothing factor");

  EvalArgs ev;
  auto add_eval = [&](CLI::App* c) {
    c->add_option("--data", ev.data, "Dataset directory")->required();
    c->add_option("--out", ev.out, "Report directory")->required();
    c->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
    c->add_option("--estimator", ev.estimator, "model, identity or oracle");
    c->add_option("--config", ev.config, "JSON config file");
    c->add_option("--chunk", ev.chunk, "Streaming chunk in samples");
    c->add_flag("--streaming", ev.streaming, "Evaluate the streaming path");
    ev.bucket_opt = c->add_option("--bucket-ms", ev.bucket_ms, "Delay bucket width");
    ev.first_opt = c->add_option("--first-ms", ev.first_ms, "First bucket start");
    ev.last_opt = c->add_option("--last-ms", ev.last_ms, "Sweep end");
  };
  auto* e = app.add_subcommand("eval", "Per-clip metrics, aggregates and delay sweep");
  add_eval(e);
  auto* w = app.add_subcommand("sweep-delay", "ERLE by ground-truth delay bucket (FEST clips)");
  add_eval(w);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return static_cast<int>(ErrorKind::kUsage);
  }

  try {
    ThreadBudget();
    if (s->parsed()) return CmdSynth(synth, out);
    if (a->parsed()) return CmdAugment(aug, out, err);
    if (t->parsed()) return CmdTrain(tr, out, err);
    if (i->parsed()) return CmdInfer(inf, out);
    if (g->parsed()) return CmdAlign(al, out);
    if (e->parsed()) return CmdEval(ev, false, out, err);
    if (w->parsed()) return CmdEval(ev, true, out, err);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return static_cast<int>(ex.kind());
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return static_cast<int>(ErrorKind::kData);
  }
  return static_cast<int>(ErrorKind::kUsage);
}

}  // namespace sca_aec
