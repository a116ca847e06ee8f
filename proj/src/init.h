#pragma once

#include <cmath>
#include <random>

#include "sca_aec/tensor.h"

namespace sca_aec {

// Uniform in +-sqrt(1 / fan_in).
inline void UniformInit(Parameter& p, std::size_t fan_in, std::mt19937_64& rng) {
  const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-a, a);
  for (double& v : p.value.storage()) v = dist(rng);
}

inline Parameter MakeParam(const std::string& name, Shape shape, double fill = 0.0,
                           bool trainable = true) {
  return Parameter{name, Tensor(std::move(shape), fill), {}, trainable};
}

}  // namespace sca_aec
