#pragma once

// Binary model container; the byte layout is described in
// docs/checkpoint_format.md. Save followed by load is bit-exact.

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "sca_aec/model.h"

namespace sca_aec {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct CheckpointExtras {
  nlohmann::json metadata = nlohmann::json::object();  // free-form, e.g. training progress
  std::vector<NamedTensor> tensors;                    // e.g. optimizer moments
};

void SaveCheckpoint(const std::string& path, const ScaCrnModel& model,
                    const CheckpointExtras& extras = {});

// Rebuilds the model from the stored config and overwrites every parameter
// and buffer. Missing, duplicate, or mis-shaped entries are data errors.
std::unique_ptr<ScaCrnModel> LoadCheckpoint(const std::string& path,
                                            CheckpointExtras* extras = nullptr);

}  // namespace sca_aec
