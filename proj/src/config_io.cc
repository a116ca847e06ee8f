#include "sca_aec/config_io.h"

#include <fstream>
#include <set>

#include "sca_aec/error.h"

namespace sca_aec {

using nlohmann::json;

namespace {

void RejectUnknown(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) FailUsage(std::string(what) + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) FailUsage(std::string(what) + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void Take(const json& j, const char* key, T& out, const char* what) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    FailUsage(std::string(what) + ": bad value for '" + key + "': " + e.what());
  }
}

std::size_t TakeFrames(const json& j, const char* key, std::size_t current, const char* what) {
  auto it = j.find(key);
  if (it == j.end()) return current;
  if (it->is_string() && (*it == "inf" || *it == "unbounded")) return kUnbounded;
  std::size_t v = current;
  Take(j, key, v, what);
  return v;
}

json Frames(std::size_t v) { return v == kUnbounded ? json("inf") : json(v); }

}  // namespace

json ToJson(const StftConfig& c) {
  return json{{"window_len", c.window_len},
              {"hop", c.hop},
              {"fft_len", c.fft_len},
              {"window", c.kind == WindowKind::kHann ? "hann" : "sqrt_hann"}};
}

StftConfig StftConfigFromJson(const json& j, StftConfig d) {
  RejectUnknown(j, {"window_len", "hop", "fft_len", "window"}, "stft config");
  std::size_t w = d.window_len, h = d.hop, n = d.fft_len;
  std::string kind = d.kind == WindowKind::kHann ? "hann" : "sqrt_hann";
  Take(j, "window_len", w, "stft config");
  Take(j, "hop", h, "stft config");
  Take(j, "fft_len", n, "stft config");
  Take(j, "window", kind, "stft config");
  if (kind != "hann" && kind != "sqrt_hann") FailUsage("stft config: unknown window '" + kind + "'");
  return StftConfig::Make(w, h, n, kind == "hann" ? WindowKind::kHann : WindowKind::kSqrtHann);
}

json ToJson(const ModelConfig& c) {
  return json{{"d", c.d},
              {"heads", c.heads},
              {"lookahead", Frames(c.lookahead)},
              {"history", Frames(c.history)},
              {"lstm_hidden", c.lstm_hidden},
              {"mask_bound", c.mask_bound},
              {"attention", ToString(c.attention)},
              {"query_residual", c.query_residual},
              {"encoder_channels", c.encoder_channels},
              {"decoder_channels", c.decoder_channels},
              {"stft", ToJson(c.stft)},
              {"seed", c.seed}};
}

ModelConfig ModelConfigFromJson(const json& j, ModelConfig c) {
  const char* what = "model config";
  RejectUnknown(j,
                {"d", "heads", "lookahead", "history", "lstm_hidden", "mask_bound", "attention",
                 "query_residual", "encoder_channels", "decoder_channels", "stft", "seed"},
                what);
  Take(j, "d", c.d, what);
  Take(j, "heads", c.heads, what);
  c.lookahead = TakeFrames(j, "lookahead", c.lookahead, what);
  c.history = TakeFrames(j, "history", c.history, what);
  Take(j, "lstm_hidden", c.lstm_hidden, what);
  Take(j, "mask_bound", c.mask_bound, what);
  std::string mode = ToString(c.attention);
  Take(j, "attention", mode, what);
  c.attention = ParseAttentionMode(mode);
  Take(j, "query_residual", c.query_residual, what);
  Take(j, "encoder_channels", c.encoder_channels, what);
  Take(j, "decoder_channels", c.decoder_channels, what);
  if (j.contains("stft")) c.stft = StftConfigFromJson(j["stft"], c.stft);
  Take(j, "seed", c.seed, what);
  c.Validate();
  return c;
}

json ToJson(const LossWeights& w) {
  json j{{"alpha", w.alpha}, {"beta", w.beta}, {"squared", w.squared}};
  if (w.w.empty()) j["w"] = w.low_frequency ? "low_frequency" : "uniform";
  else j["w"] = w.w;
  return j;
}

LossWeights LossWeightsFromJson(const json& j, LossWeights w) {
  const char* what = "loss config";
  RejectUnknown(j, {"alpha", "beta", "w", "squared"}, what);
  Take(j, "alpha", w.alpha, what);
  Take(j, "beta", w.beta, what);
  Take(j, "squared", w.squared, what);
  if (j.contains("w") && j["w"].is_string()) {
    const std::string name = j["w"];
    if (name != "uniform" && name != "low_frequency") {
      FailUsage("loss config: unknown weighting '" + name + "'");
    }
    w.w.clear();
    w.low_frequency = name == "low_frequency";
  } else {
    Take(j, "w", w.w, what);
  }
  return w;
}

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) FailData("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    FailData(path + ": malformed JSON: " + e.what());
  }
}

void WriteJsonFile(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) FailData("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace sca_aec
