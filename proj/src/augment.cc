#include "sca_aec/augment.h"

#include <algorithm>
#include <cmath>

#include "sca_aec/error.h"

namespace sca_aec {

namespace {

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double SumSq(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

BucketTable MakeTable(std::vector<double> edges, std::vector<double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  for (double& p : probs) p /= total;
  return BucketTable{std::move(edges), std::move(probs)};
}

const char* KindName(NonlinearityKind k) {
  switch (k) {
    case NonlinearityKind::kNone: return "none";
    case NonlinearityKind::kArctan: return "arctan";
    case NonlinearityKind::kPolynomial: return "polynomial";
  }
  return "none";
}

NonlinearityKind ParseKind(const std::string& s) {
  if (s == "none") return NonlinearityKind::kNone;
  if (s == "arctan") return NonlinearityKind::kArctan;
  if (s == "polynomial") return NonlinearityKind::kPolynomial;
  FailData("unknown nonlinearity '" + s + "'");
}

}  // namespace

std::string ToString(TalkMode m) {
  switch (m) {
    case TalkMode::kFest: return "FEST";
    case TalkMode::kNest: return "NEST";
    case TalkMode::kDt: return "DT";
  }
  return "DT";
}

TalkMode ParseTalkMode(const std::string& s) {
  if (s == "FEST") return TalkMode::kFest;
  if (s == "NEST") return TalkMode::kNest;
  if (s == "DT") return TalkMode::kDt;
  FailData("unknown talk mode '" + s + "'");
}

std::size_t BucketTable::Bucket(double value) const {
  const std::size_t buckets = probs.size();
  for (std::size_t b = 0; b + 1 < buckets; ++b)
    if (value < edges[b + 1]) return b;
  return buckets - 1;
}

double BucketTable::Sample(std::mt19937_64& rng, std::size_t* bucket) const {
  const double u = Uniform(rng, 0.0, 1.0);
  std::size_t b = 0;
  double acc = probs[0];
  while (b + 1 < probs.size() && u >= acc) acc += probs[++b];
  if (bucket) *bucket = b;
  return Uniform(rng, edges[b], edges[b + 1]);
}

const BucketTable& Rt60Buckets() {
  static const BucketTable t = MakeTable({0.05, 0.3, 0.6, 1.0, 1.5}, {0.6, 0.3, 0.08, 0.02});
  return t;
}
const BucketTable& DelayBuckets() {
  // the listed probabilities sum to 1.1; MakeTable renormalizes
  static const BucketTable t = MakeTable({-20, 0, 200, 400, 600}, {0.05, 0.6, 0.4, 0.05});
  return t;
}
const BucketTable& SnrBuckets() {
  static const BucketTable t = MakeTable({0, 10, 20, 30, 40}, {0.1, 0.1, 0.3, 0.5});
  return t;
}
const BucketTable& SerBuckets() {
  static const BucketTable t = MakeTable({-10, 0, 10, 30, 40}, {0.1, 0.5, 0.3, 0.1});
  return t;
}

ScenarioSpec SampleScenario(std::uint64_t seed, const SamplerConfig& cfg) {
  std::mt19937_64 rng(seed);
  ScenarioSpec s;
  s.rng_seed = seed;
  s.mode = static_cast<TalkMode>(std::uniform_int_distribution<int>(0, 2)(rng));
  s.rt60_s = Rt60Buckets().Sample(rng);
  s.delay_ms = DelayBuckets().Sample(rng);
  s.snr_db = SnrBuckets().Sample(rng);
  s.ser_db = SerBuckets().Sample(rng);
  s.nonlinearity.kind = static_cast<NonlinearityKind>(std::uniform_int_distribution<int>(0, 2)(rng));
  const double gamma = Uniform(rng, 1.0, 5.0);
  const std::array<double, 3> a{Uniform(rng, 0.8, 1.0), Uniform(rng, -0.3, 0.3),
                                Uniform(rng, -0.3, 0.3)};
  if (s.nonlinearity.kind == NonlinearityKind::kArctan) s.nonlinearity.gamma = gamma;
  if (s.nonlinearity.kind == NonlinearityKind::kPolynomial) s.nonlinearity.a = a;

  s.epc_probability = Uniform(rng, 0.0, cfg.max_epc_probability);
  const int candidates = std::poisson_distribution<int>(cfg.epc_rate_per_s * cfg.clip_s)(rng);
  for (int i = 0; i < candidates; ++i) {
    const double accept = Uniform(rng, 0.0, 1.0);
    EpcEvent e;
    e.duration_s = Uniform(rng, 0.01, 0.2);
    e.time_s = Uniform(rng, 0.0, std::max(0.0, cfg.clip_s - e.duration_s));
    e.type = Uniform(rng, 0.0, 1.0) < 0.5 ? EpcType::kCut : EpcType::kInsert;
    e.side = Uniform(rng, 0.0, 1.0) < 0.5 ? EpcSide::kNear : EpcSide::kFar;
    if (accept < s.epc_probability) s.epc_events.push_back(e);
  }
  std::sort(s.epc_events.begin(), s.epc_events.end(),
            [](const EpcEvent& a, const EpcEvent& b) { return a.time_s < b.time_s; });
  return s;
}

std::vector<double> ApplyNonlinearity(const std::vector<double>& x, const Nonlinearity& nl) {
  if (nl.kind == NonlinearityKind::kNone) return x;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (nl.kind == NonlinearityKind::kArctan) {
      if (!(nl.gamma > 0.0)) FailUsage("arctan nonlinearity needs gamma > 0");
      y[i] = std::atan(nl.gamma * v) / nl.gamma;
    } else {
      y[i] = nl.a[0] * v + nl.a[1] * v * v + nl.a[2] * v * v * v;
    }
  }
  const double ex = SumSq(x), ey = SumSq(y);
  if (ex > 0.0 && ey > 0.0) {
    const double g = std::sqrt(ex / ey);
    for (double& v : y) v *= g;
  }
  return y;
}

std::vector<double> ApplyEpc(const std::vector<double>& x, const std::vector<EpcEvent>& events,
                             EpcSide side, double sample_rate) {
  std::vector<double> y = x;
  const std::size_t n = x.size();
  for (const EpcEvent& e : events) {
    if (e.side != side) continue;
    const std::size_t at = std::min(n, static_cast<std::size_t>(std::lround(e.time_s * sample_rate)));
    const std::size_t len = static_cast<std::size_t>(std::lround(e.duration_s * sample_rate));
    std::vector<double> out;
    out.reserve(n);
    out.insert(out.end(), y.begin(), y.begin() + static_cast<std::ptrdiff_t>(at));
    if (e.type == EpcType::kCut) {
      const std::size_t resume = std::min(n, at + len);
      out.insert(out.end(), y.begin() + static_cast<std::ptrdiff_t>(resume), y.end());
    } else {
      out.insert(out.end(), len, 0.0);
      out.insert(out.end(), y.begin() + static_cast<std::ptrdiff_t>(at), y.end());
    }
    out.resize(n, 0.0);
    y = std::move(out);
  }
  return y;
}

AugmentedExample RenderExample(const ScenarioSpec& spec, const std::vector<double>& near,
                               const std::vector<double>& far, const std::vector<double>& noise,
                               const std::vector<double>& rir, double sample_rate) {
  const std::size_t n = near.size();
  if (n == 0) FailData("render: empty near-end clip");
  if (rir.empty()) FailData("render: empty impulse response");
  const long delay = std::lround(spec.delay_ms * sample_rate / 1000.0);
  const std::size_t lead = delay < 0 ? static_cast<std::size_t>(-delay) : 0;
  if (far.size() < n + lead) FailData("render: far-end clip too short after delay shift");
  if (noise.size() < n) FailData("render: noise clip too short");

  AugmentedExample ex;
  ex.spec = spec;
  ex.far.assign(far.begin(), far.begin() + static_cast<std::ptrdiff_t>(n));
  const std::vector<double> loud = ApplyNonlinearity(
      std::vector<double>(far.begin(), far.begin() + static_cast<std::ptrdiff_t>(n + lead)),
      spec.nonlinearity);
  std::vector<double> path(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const long src = static_cast<long>(i) - delay;
    if (src >= 0) path[i] = loud[static_cast<std::size_t>(src)];
  }
  path = ApplyEpc(path, spec.epc_events, EpcSide::kFar, sample_rate);
  ex.target = ApplyEpc(near, spec.epc_events, EpcSide::kNear, sample_rate);
  ex.echo = Convolve(path, rir);
  ex.echo.resize(n);

  if (spec.mode == TalkMode::kFest) std::fill(ex.target.begin(), ex.target.end(), 0.0);
  if (spec.mode == TalkMode::kNest) {
    std::fill(ex.echo.begin(), ex.echo.end(), 0.0);
    std::fill(ex.far.begin(), ex.far.end(), 0.0);
  }
  const double es = SumSq(ex.target);
  double ez = SumSq(ex.echo);
  if (spec.mode == TalkMode::kDt && es > 0.0 && ez > 0.0) {
    const double g = std::sqrt(es / (ez * std::pow(10.0, spec.ser_db / 10.0)));
    for (double& v : ex.echo) v *= g;
    ez = SumSq(ex.echo);
  }
  ex.realized_ser_db = es > 0.0 && ez > 0.0 ? 10.0 * std::log10(es / ez) : std::nan("");

  std::vector<double> clean(n);
  for (std::size_t i = 0; i < n; ++i) clean[i] = ex.target[i] + ex.echo[i];
  const double ec = SumSq(clean);
  ex.noise.assign(noise.begin(), noise.begin() + static_cast<std::ptrdiff_t>(n));
  double ev = SumSq(ex.noise);
  if (ec > 0.0 && ev > 0.0) {
    const double g = std::sqrt(ec / (ev * std::pow(10.0, spec.snr_db / 10.0)));
    for (double& v : ex.noise) v *= g;
    ev = SumSq(ex.noise);
  } else {
    std::fill(ex.noise.begin(), ex.noise.end(), 0.0);
    ev = 0.0;
  }
  ex.realized_snr_db = ec > 0.0 && ev > 0.0 ? 10.0 * std::log10(ec / ev) : std::nan("");

  ex.mic.resize(n);
  for (std::size_t i = 0; i < n; ++i) ex.mic[i] = ex.target[i] + ex.echo[i] + ex.noise[i];

  std::size_t peak = 0;
  for (std::size_t i = 1; i < rir.size(); ++i)
    if (std::abs(rir[i]) > std::abs(rir[peak])) peak = i;
  ex.true_delay_samples = delay + static_cast<long>(peak);
  ex.non_causal = ex.true_delay_samples < 0;
  return ex;
}

RoomSpec SampleRoom(std::mt19937_64& rng, double rt60_s) {
  const Vec3 dims{Uniform(rng, 3.0, 8.0), Uniform(rng, 3.0, 6.0), Uniform(rng, 2.5, 3.5)};
  auto point = [&] {
    return Vec3{Uniform(rng, 0.3, dims[0] - 0.3), Uniform(rng, 0.3, dims[1] - 0.3),
                Uniform(rng, 0.3, dims[2] - 0.3)};
  };
  Vec3 src = point(), mic = point();
  while (std::hypot(src[0] - mic[0], src[1] - mic[1], src[2] - mic[2]) < 0.5) mic = point();
  return MakeRoom(dims, src, mic, rt60_s, AbsorptionModel::kShoeboxFit, 1);
}

nlohmann::json ToJson(const ScenarioSpec& s) {
  nlohmann::json events = nlohmann::json::array();
  for (const EpcEvent& e : s.epc_events) {
    events.push_back({{"time_s", e.time_s},
                      {"type", e.type == EpcType::kCut ? "cut" : "insert"},
                      {"duration_s", e.duration_s},
                      {"side", e.side == EpcSide::kNear ? "near" : "far"}});
  }
  nlohmann::json nl = {{"kind", KindName(s.nonlinearity.kind)}};
  if (s.nonlinearity.kind == NonlinearityKind::kArctan) nl["gamma"] = s.nonlinearity.gamma;
  if (s.nonlinearity.kind == NonlinearityKind::kPolynomial) nl["a"] = s.nonlinearity.a;
  return {{"mode", ToString(s.mode)},      {"rt60_s", s.rt60_s},
          {"delay_ms", s.delay_ms},        {"snr_db", s.snr_db},
          {"ser_db", s.ser_db},            {"nonlinearity", nl},
          {"epc_probability", s.epc_probability}, {"epc_events", events},
          {"rng_seed", s.rng_seed}};
}

ScenarioSpec ScenarioFromJson(const nlohmann::json& j) {
  try {
    ScenarioSpec s;
    s.mode = ParseTalkMode(j.at("mode").get<std::string>());
    s.rt60_s = j.at("rt60_s").get<double>();
    s.delay_ms = j.at("delay_ms").get<double>();
    s.snr_db = j.at("snr_db").get<double>();
    s.ser_db = j.at("ser_db").get<double>();
    const auto& nl = j.at("nonlinearity");
    s.nonlinearity.kind = ParseKind(nl.at("kind").get<std::string>());
    if (nl.contains("gamma")) s.nonlinearity.gamma = nl["gamma"].get<double>();
    if (nl.contains("a")) s.nonlinearity.a = nl["a"].get<std::array<double, 3>>();
    s.epc_probability = j.value("epc_probability", 0.0);
    for (const auto& e : j.value("epc_events", nlohmann::json::array())) {
      EpcEvent ev;
      ev.time_s = e.at("time_s").get<double>();
      ev.type = e.at("type").get<std::string>() == "cut" ? EpcType::kCut : EpcType::kInsert;
      ev.duration_s = e.at("duration_s").get<double>();
      ev.side = e.at("side").get<std::string>() == "near" ? EpcSide::kNear : EpcSide::kFar;
      s.epc_events.push_back(ev);
    }
    s.rng_seed = j.value("rng_seed", std::uint64_t{0});
    return s;
  } catch (const nlohmann::json::exception& e) {
    FailData(std::string("bad scenario json: ") + e.what());
  }
}

}  // namespace sca_aec
