#pragma once

// Datasets: the in-memory toy corpus used for learning checks, and the
// on-disk layout written by the augmenter.
//
// On disk a dataset directory holds index.jsonl (one row per example) and,
// per example, <id>.mic.wav, <id>.far.wav, <id>.target.wav and <id>.json
// (scenario sidecar).

#include <cstdint>
#include <string>
#include <vector>

#include "sca_aec/augment.h"
#include "sca_aec/trainer.h"

namespace sca_aec {

struct LabeledClip {
  TrainClip clip;
  TalkMode mode = TalkMode::kDt;
  double true_delay_ms = 0.0;
  bool has_metadata = true;
};

struct ToyDatasetConfig {
  std::size_t train_clips = 200;
  std::size_t val_clips = 20;
  std::size_t test_clips = 40;     // all FEST
  double seconds = 4.0;
  int max_delay_frames = 20;        // delays k * hop, k uniform in [0, max]
  std::size_t hop = 480;
  double far_level_db = 10.0;       // far-end gain uniform in +-this
  double ser_db = 0.0;
  std::uint64_t seed = 1;
};

struct ToyDataset {
  std::vector<TrainClip> train;
  std::vector<TrainClip> val;
  std::vector<LabeledClip> test;
  std::vector<LabeledClip> train_labels;  // metadata for train, same order
};

// Pure-delay plus mild-RIR echoes, no noise. Train and validation modes
// cycle FEST, DT, DT, NEST, FEST.
ToyDataset MakeToyDataset(const ToyDatasetConfig& cfg = {});

// Unit direct path plus a short decaying Gaussian tail.
std::vector<double> MildRir(std::mt19937_64& rng, double sample_rate = 48000.0);

// Writes one example; returns its index.jsonl row.
nlohmann::json WriteExample(const std::string& dir, const std::string& id,
                            const AugmentedExample& ex);
void WriteIndex(const std::string& dir, const std::vector<nlohmann::json>& rows);

// Reads index.jsonl. Rows without mode/delay load with has_metadata = false;
// `warnings` receives one line per such row.
std::vector<LabeledClip> LoadDataset(const std::string& dir, std::vector<std::string>* warnings = nullptr);

// Deterministic split: every k-th example (k = round(1 / fraction)) goes to
// validation; fraction 0 keeps everything for training.
void SplitTrainVal(const std::vector<LabeledClip>& all, double val_fraction,
                   std::vector<TrainClip>& train, std::vector<TrainClip>& val);

}  // namespace sca_aec
