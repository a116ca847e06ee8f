#pragma once

// JSON encodings of configuration structs. Decoding starts from the given
// defaults and overrides only the keys present; unknown keys are rejected.

#include "json.hpp"
#include "sca_aec/loss.h"
#include "sca_aec/model.h"
#include "sca_aec/stft.h"

namespace sca_aec {

nlohmann::json ToJson(const StftConfig& c);
StftConfig StftConfigFromJson(const nlohmann::json& j, StftConfig defaults = StftConfig::Default());

nlohmann::json ToJson(const ModelConfig& c);
ModelConfig ModelConfigFromJson(const nlohmann::json& j, ModelConfig defaults = {});

nlohmann::json ToJson(const LossWeights& w);
LossWeights LossWeightsFromJson(const nlohmann::json& j, LossWeights defaults = {});

// Reads a JSON file; data error when missing or malformed.
nlohmann::json ReadJsonFile(const std::string& path);
void WriteJsonFile(const std::string& path, const nlohmann::json& j);

}  // namespace sca_aec
