#pragma once

// Synthetic AEC scenario sampling and rendering: d = s + z + v.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "sca_aec/rir.h"

namespace sca_aec {

enum class TalkMode { kFest, kNest, kDt };
std::string ToString(TalkMode m);
TalkMode ParseTalkMode(const std::string& s);

enum class NonlinearityKind { kNone, kArctan, kPolynomial };

struct Nonlinearity {
  NonlinearityKind kind = NonlinearityKind::kNone;
  double gamma = 1.0;                 // arctan(gamma x) / gamma
  std::array<double, 3> a{1, 0, 0};   // a1 x + a2 x^2 + a3 x^3
};

enum class EpcType { kCut, kInsert };
enum class EpcSide { kNear, kFar };

struct EpcEvent {
  double time_s = 0.0;
  EpcType type = EpcType::kCut;
  double duration_s = 0.01;
  EpcSide side = EpcSide::kFar;
};

// Piecewise-uniform distribution over contiguous buckets.
struct BucketTable {
  std::vector<double> edges;  // size buckets + 1, ascending
  std::vector<double> probs;  // normalized

  std::size_t Bucket(double value) const;
  double Sample(std::mt19937_64& rng, std::size_t* bucket = nullptr) const;
};

const BucketTable& Rt60Buckets();   // seconds
const BucketTable& DelayBuckets();  // milliseconds, signed
const BucketTable& SnrBuckets();    // dB
const BucketTable& SerBuckets();    // dB

struct ScenarioSpec {
  TalkMode mode = TalkMode::kDt;
  double rt60_s = 0.3;
  double delay_ms = 0.0;
  double snr_db = 30.0;
  double ser_db = 0.0;
  Nonlinearity nonlinearity;
  double epc_probability = 0.0;
  std::vector<EpcEvent> epc_events;
  std::uint64_t rng_seed = 0;
};

struct SamplerConfig {
  double clip_s = 10.0;
  double max_epc_probability = 0.1;
  double epc_rate_per_s = 0.1;  // candidate events, Poisson mean rate
};

ScenarioSpec SampleScenario(std::uint64_t seed, const SamplerConfig& cfg = {});

// Applies the distortion and restores the input RMS.
std::vector<double> ApplyNonlinearity(const std::vector<double>& x, const Nonlinearity& nl);

// Cut removes [t, t + dur) and pulls the rest forward; insert pushes in
// silence. Length is preserved (zero tail / truncation).
std::vector<double> ApplyEpc(const std::vector<double>& x, const std::vector<EpcEvent>& events,
                             EpcSide side, double sample_rate = 48000.0);

struct AugmentedExample {
  std::vector<double> far;     // x
  std::vector<double> mic;     // d
  std::vector<double> target;  // s
  std::vector<double> echo;    // z
  std::vector<double> noise;   // v
  ScenarioSpec spec;
  long true_delay_samples = 0;  // bulk delay + direct path
  bool non_causal = false;
  double realized_snr_db = 0.0;  // NaN when undefined
  double realized_ser_db = 0.0;
};

// near/far/noise are raw sources; the output has near.size() samples. A
// positive delay lags the echo behind x; a negative one needs far to cover
// near.size() + |delay| samples.
AugmentedExample RenderExample(const ScenarioSpec& spec, const std::vector<double>& near,
                               const std::vector<double>& far, const std::vector<double>& noise,
                               const std::vector<double>& rir, double sample_rate = 48000.0);

// Random shoebox room for the scenario's RT60: dims in [3,8]x[3,6]x[2.5,3.5]
// m, source/mic at least 0.5 m apart and 0.3 m from walls.
RoomSpec SampleRoom(std::mt19937_64& rng, double rt60_s);

nlohmann::json ToJson(const ScenarioSpec& s);
ScenarioSpec ScenarioFromJson(const nlohmann::json& j);

}  // namespace sca_aec
