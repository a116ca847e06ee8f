#pragma once

#include <vector>

#include "sca_aec/tensor.h"

namespace sca_aec {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

// Global L2 norm of all gradients; rescales them to `max_norm` when larger.
// Returns the norm before clipping.
double ClipGradNorm(const std::vector<Parameter*>& params, double max_norm);

class Adam {
 public:
  Adam(std::vector<Parameter*> params, const AdamConfig& cfg);

  // One bias-corrected update from the current gradients (not cleared).
  void Step();

  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Parameter*>& params() const { return params_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(std::size_t t) { t_ = t; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace sca_aec
