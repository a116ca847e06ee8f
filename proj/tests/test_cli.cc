#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "sca_aec/audio.h"
#include "sca_aec/augment.h"
#include "sca_aec/cli.h"
#include "sca_aec/config_io.h"
#include "sca_aec/dataset.h"
#include "sca_aec/loss.h"
#include "sca_aec/synth.h"

using namespace sca_aec;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run Cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::map<std::string, std::string> Tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = Slurp(e.path());
  return files;
}

// Shared fixture: sources, a small augmented dataset and a one-epoch model.
struct World {
  fs::path root;
  World() {
    root = fs::temp_directory_path() / ("sca_cli_" + std::to_string(getpid()));
    fs::remove_all(root);
    REQUIRE(Cli({"synth-corpus", "--out", (root / "src").string(), "--count", "3", "--seconds", "0.6", "--seed", "2"}).code == 0);
    REQUIRE(Cli({"augment", "--manifest", (root / "src/manifest.jsonl").string(), "--out", (root / "data").string(),
                 "--count", "10", "--clip-seconds", "0.5", "--seed", "7"}).code == 0);
    REQUIRE(Cli({"train", "--data", (root / "data").string(), "--out", (root / "run").string(), "--epochs", "1",
                 "--batch", "5", "--seed", "1"}).code == 0);
  }
  ~World() { fs::remove_all(root); }
  std::string p(const std::string& rel) const { return (root / rel).string(); }
};

World& Shared() {
  static World w;
  return w;
}

double RelL2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace

TEST_CASE("usage errors and help") {
  CHECK(Cli({}).code == 1);
  CHECK(Cli({"frobnicate"}).code == 1);
  CHECK(Cli({"train", "--data", "x"}).code == 1);
  const Run help = Cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("sweep-delay") != std::string::npos);
  const std::string dir = Shared().p("tmp_src");
  setenv("SCA_AEC_THREADS", "zero", 1);
  CHECK(Cli({"synth-corpus", "--out", dir}).code == 1);
  setenv("SCA_AEC_THREADS", "1", 1);
  CHECK(ThreadBudget() == 1);
  unsetenv("SCA_AEC_THREADS");
}

TEST_CASE("augment is deterministic and its summary recounts the index") {
  World& w = Shared();
  REQUIRE(Cli({"augment", "--manifest", w.p("src/manifest.jsonl"), "--out", w.p("data_again"), "--count", "10",
               "--clip-seconds", "0.5", "--seed", "7"}).code == 0);
  CHECK(Tree(w.p("data")) == Tree(w.p("data_again")));

  std::map<std::string, std::vector<std::size_t>> counts;
  std::ifstream index(w.root / "data/index.jsonl");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(index, line)) {
    const auto row = nlohmann::json::parse(line);
    const auto spec = ScenarioFromJson(ReadJsonFile(w.p("data/" + row["id"].get<std::string>() + ".json"))["scenario"]);
    CHECK(row["mode"] == ToString(spec.mode));
    auto bump = [&](const char* name, const BucketTable& t, double v) {
      auto& c = counts[name];
      c.resize(t.probs.size());
      ++c[t.Bucket(v)];
    };
    bump("rt60_s", Rt60Buckets(), spec.rt60_s);
    bump("delay_ms", DelayBuckets(), spec.delay_ms);
    bump("snr_db", SnrBuckets(), spec.snr_db);
    bump("ser_db", SerBuckets(), spec.ser_db);
    ++rows;
  }
  CHECK(rows == 10);
  std::ifstream summary(w.root / "data/summary.csv");
  std::getline(summary, line);
  std::size_t checked = 0;
  while (std::getline(summary, line)) {
    std::stringstream ss(line);
    std::string table, bucket, lo, hi, count;
    std::getline(ss, table, ',');
    std::getline(ss, bucket, ',');
    std::getline(ss, lo, ',');
    std::getline(ss, hi, ',');
    std::getline(ss, count, ',');
    CHECK(counts[table][std::stoul(bucket)] == std::stoul(count));
    ++checked;
  }
  CHECK(checked == 16);
  CHECK(fs::exists(w.root / "data/resolved_config.json"));
}

TEST_CASE("augment manifest failures") {
  World& w = Shared();
  std::ofstream(w.root / "empty.jsonl") << "\n";
  CHECK(Cli({"augment", "--manifest", w.p("empty.jsonl"), "--out", w.p("d_empty")}).code == 2);

  {
    std::ofstream m(w.root / "partial.jsonl");
    m << R"({"near_wav":"src/missing.wav","far_wav":"src/far_0000.wav","noise_wav":"src/noise_0000.wav"})" << "\n";
    m << R"({"near_wav":"src/near_0001.wav","far_wav":"src/far_0001.wav","noise_wav":"src/noise_0001.wav"})" << "\n";
  }
  const Run r = Cli({"augment", "--manifest", w.p("partial.jsonl"), "--out", w.p("d_partial"), "--count", "2",
                     "--clip-seconds", "0.3"});
  CHECK(r.code == 0);
  CHECK(r.err.find("missing.wav") != std::string::npos);
  const auto clips = LoadDataset(w.p("d_partial"));
  CHECK(clips.size() == 1);
  CHECK(Slurp(w.root / "d_partial/errors.jsonl").find("\"manifest_row\":0") != std::string::npos);
}

TEST_CASE("train: flags override the config, resume matches a straight run") {
  World& w = Shared();
  nlohmann::json cfg = {{"train", {{"epochs", 5}, {"batch", 5}}}, {"seed", 1}};
  WriteJsonFile(w.p("train.json"), cfg);
  REQUIRE(Cli({"train", "--config", w.p("train.json"), "--data", w.p("data"), "--out", w.p("run2"), "--epochs", "2"}).code == 0);
  const auto resolved = ReadJsonFile(w.p("run2/resolved_config.json"));
  CHECK(resolved["train"]["epochs"] == 2);
  CHECK(resolved["train"]["batch"] == 5);

  REQUIRE(Cli({"train", "--data", w.p("data"), "--out", w.p("run_resume"), "--resume", w.p("run/last.ckpt"),
               "--epochs", "2", "--batch", "5", "--seed", "1"}).code == 0);
  CHECK(Slurp(w.root / "run_resume/loss.csv") == Slurp(w.root / "run2/loss.csv"));

  nlohmann::json bogus = {{"trian", {}}};
  WriteJsonFile(w.p("bogus.json"), bogus);
  CHECK(Cli({"train", "--config", w.p("bogus.json"), "--data", w.p("data"), "--out", w.p("run3")}).code == 1);
  CHECK(Cli({"train", "--data", w.p("nowhere"), "--out", w.p("run3")}).code == 2);
}

TEST_CASE("infer: streaming chunks match offline, zero mask is silent") {
  World& w = Shared();
  const std::string mic = w.p("data/ex00001.mic.wav"), far = w.p("data/ex00001.far.wav");
  REQUIRE(Cli({"infer", "--checkpoint", w.p("run/best.ckpt"), "--mic", mic, "--far", far, "--out", w.p("off.wav"),
               "--offline"}).code == 0);
  const auto offline = ReadWav(w.p("off.wav")).samples;
  CHECK(offline.size() == ReadWav(mic).samples.size());
  for (const char* chunk : {"1", "480", "4801"}) {
    REQUIRE(Cli({"infer", "--checkpoint", w.p("run/best.ckpt"), "--mic", mic, "--far", far, "--out",
                 w.p(std::string("s") + chunk + ".wav"), "--streaming", "--chunk", chunk}).code == 0);
    CHECK(RelL2(ReadWav(w.p(std::string("s") + chunk + ".wav")).samples, offline) < 1e-6);
  }
  CHECK(Slurp(w.root / "s1.wav") == Slurp(w.root / "s4801.wav"));
  CHECK(fs::exists(w.root / "s480.wav.config.json"));

  REQUIRE(Cli({"infer", "--checkpoint", w.p("run/best.ckpt"), "--mic", mic, "--far", far, "--out", w.p("z.wav"),
               "--zero-mask"}).code == 0);
  for (double v : ReadWav(w.p("z.wav")).samples) REQUIRE(v == 0.0);

  CHECK(Cli({"infer", "--checkpoint", w.p("run/best.ckpt"), "--mic", mic, "--far", far, "--out", w.p("x.wav"),
             "--streaming", "--offline"}).code == 1);
  // same file relabelled as 16 kHz
  std::string bytes = Slurp(far);
  const unsigned rate = 16000, byte_rate = 16000 * 4;
  for (int k = 0; k < 4; ++k) {
    bytes[24 + k] = static_cast<char>((rate >> (8 * k)) & 0xff);
    bytes[28 + k] = static_cast<char>((byte_rate >> (8 * k)) & 0xff);
  }
  std::ofstream(w.root / "far16k.wav", std::ios::binary) << bytes;
  CHECK(Cli({"infer", "--checkpoint", w.p("run/best.ckpt"), "--mic", mic, "--far", w.p("far16k.wav"), "--out",
             w.p("x.wav")}).code == 2);
}

TEST_CASE("eval: oracle and identity estimators, missing metadata") {
  World& w = Shared();
  REQUIRE(Cli({"eval", "--data", w.p("data"), "--out", w.p("ev_id"), "--estimator", "identity"}).code == 0);
  std::ifstream sweep(w.root / "ev_id/sweep.csv");
  std::string line;
  std::getline(sweep, line);
  std::size_t buckets = 0;
  while (std::getline(sweep, line)) {
    CHECK(line.substr(line.rfind(',') + 1) == "0");
    ++buckets;
  }
  const auto clips = LoadDataset(w.p("data"));
  std::size_t fest = 0;
  for (const auto& c : clips) fest += c.mode == TalkMode::kFest;
  if (fest > 0) CHECK(buckets > 0);

  REQUIRE(Cli({"eval", "--data", w.p("data"), "--out", w.p("ev_or"), "--estimator", "oracle"}).code == 0);
  std::ifstream metrics(w.root / "ev_or/metrics.jsonl");
  std::size_t rows = 0;
  while (std::getline(metrics, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto& c = clips[rows++];
    CHECK(j["id"] == c.clip.id);
    CHECK(j["loss"].get<double>() == 0.0);
    double mic_energy = 0;
    for (double v : c.clip.mic) mic_energy += v * v;
    if (c.mode == TalkMode::kFest && mic_energy > 0) CHECK(j["erle_db"].get<double>() == Erle(c.clip.mic, c.clip.target));
    else CHECK_FALSE(j.contains("erle_db"));
  }
  CHECK(rows == clips.size());

  // strip metadata from one row
  fs::copy(w.root / "data", w.root / "data_nometa", fs::copy_options::recursive);
  std::ifstream in(w.root / "data/index.jsonl");
  std::string out_rows;
  for (int k = 0; std::getline(in, line); ++k) {
    auto j = nlohmann::json::parse(line);
    if (k == 0) j.erase("mode");
    out_rows += j.dump() + "\n";
  }
  std::ofstream(w.root / "data_nometa/index.jsonl", std::ios::trunc) << out_rows;
  const Run r = Cli({"eval", "--data", w.p("data_nometa"), "--out", w.p("ev_nm"), "--checkpoint", w.p("run/best.ckpt")});
  CHECK(r.code == 0);
  CHECK(r.err.find("skipped") != std::string::npos);
  std::ifstream nm(w.root / "ev_nm/metrics.jsonl");
  rows = 0;
  while (std::getline(nm, line)) ++rows;
  CHECK(rows == clips.size() - 1);

  const Run sw = Cli({"sweep-delay", "--data", w.p("data"), "--out", w.p("sw"), "--checkpoint", w.p("run/best.ckpt")});
  CHECK(sw.code == 0);
  CHECK(sw.out.rfind("bucket_start_ms", 0) == 0);
  CHECK(Cli({"eval", "--data", w.p("data"), "--out", w.p("ev_x")}).code == 1);
}

TEST_CASE("align reports the injected delay") {
  World& w = Shared();
  std::mt19937_64 rng(4);
  const auto src = SynthSpeech(rng, 96000 + 10000);
  std::vector<double> far(src.begin() + 10000, src.end()), mic(96000);
  for (std::size_t i = 0; i < mic.size(); ++i) mic[i] = src[10000 + i - 4800];
  WriteWav(w.p("amic.wav"), AudioClip{mic, kSampleRate});
  WriteWav(w.p("afar.wav"), AudioClip{far, kSampleRate});
  const Run r = Cli({"align", "--mic", w.p("amic.wav"), "--far", w.p("afar.wav"), "--aligned", w.p("aligned.wav")});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["delay_samples"] == 4800);
  CHECK(j["delay_ms"].get<double>() == doctest::Approx(100.0));
  const auto aligned = ReadWav(w.p("aligned.wav")).samples;
  CHECK(aligned[5000] == doctest::Approx(mic[5000]).epsilon(1e-6));

  REQUIRE(Cli({"align", "--mic", w.p("amic.wav"), "--far", w.p("afar.wav"), "--streaming", "--max-delay", "9600",
               "--out", w.p("stream.jsonl")}).code == 0);
  std::ifstream in(w.root / "stream.jsonl");
  std::string line, last;
  while (std::getline(in, line)) last = line;
  CHECK(nlohmann::json::parse(last)["delay_samples"] == 4800);
  CHECK(Cli({"align", "--mic", w.p("amic.wav"), "--far", w.p("afar.wav"), "--weighting", "magic"}).code == 1);
}
