#pragma once

// Toy-scale training loop: per-clip graphs, gradient accumulation over a
// batch, Adam, best-validation checkpointing and exact resume.

#include <string>
#include <vector>

#include "sca_aec/checkpoint.h"
#include "sca_aec/loss.h"
#include "sca_aec/model.h"
#include "sca_aec/optim.h"

namespace sca_aec {

struct TrainClip {
  std::string id;
  std::vector<double> mic;
  std::vector<double> far;
  std::vector<double> target;
};

// Forward of one clip in training mode ending in the loss. Gradients go to
// `grads`; batch-norm statistics observed on this clip go to `observed`.
LossTerms ClipGradients(ScaCrnModel& m, const TrainClip& clip, const LossWeights& weights,
                        GradientMap& grads, std::vector<ops::BatchStatistics>& observed);

// Loss with frozen statistics and no gradients.
LossTerms ClipLoss(ScaCrnModel& m, const TrainClip& clip, const LossWeights& weights);

struct TrainConfig {
  int epochs = 10;
  std::size_t batch = 4;
  AdamConfig adam;
  LossWeights loss;
  double bn_momentum = 0.9;
  std::uint64_t seed = 0;  // epoch shuffles
  std::size_t threads = 1;  // clips of a batch evaluated concurrently
  std::string out_dir;      // empty: no files
  bool verbose = false;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean per clip
  double val_loss = 0.0;    // mean per clip, NaN without validation data
  double grad_norm = 0.0;   // mean pre-clip norm
  double seconds = 0.0;
};

class Trainer {
 public:
  Trainer(ScaCrnModel& m, const TrainConfig& cfg);

  // Continues from a checkpoint written by this class (same model object
  // must already hold the checkpoint's weights).
  void Restore(const CheckpointExtras& extras);
  CheckpointExtras State() const;

  EpochStats RunEpoch(const std::vector<TrainClip>& train, const std::vector<TrainClip>& val);

  // Runs until cfg.epochs epochs in total have completed. With out_dir set,
  // writes loss.csv, last.ckpt every epoch and best.ckpt on improvement.
  std::vector<EpochStats> Fit(const std::vector<TrainClip>& train,
                              const std::vector<TrainClip>& val);

  int epochs_done() const { return epoch_; }
  double best_val() const { return best_val_; }
  const std::vector<EpochStats>& history() const { return history_; }

 private:
  void DumpAndAbort(const std::string& why, const std::vector<const TrainClip*>& batch, double loss,
                    double grad_norm);

  ScaCrnModel* m_;
  TrainConfig cfg_;
  Adam adam_;
  int epoch_ = 0;
  double best_val_;
  int best_epoch_ = 0;
  std::vector<EpochStats> history_;
};

double MeanLoss(ScaCrnModel& m, const std::vector<TrainClip>& clips, const LossWeights& weights);

}  // namespace sca_aec
