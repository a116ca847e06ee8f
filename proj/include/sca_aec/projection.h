#pragma once

#include <string>

#include "sca_aec/autograd.h"

namespace sca_aec {

// Affine map from F bins to d features, applied with one weight to both the
// real and the imaginary plane.
struct ComplexProjection {
  Parameter weight;  // [F, d]
  Parameter bias;    // [d]

  ComplexProjection() = default;
  ComplexProjection(const std::string& name, std::size_t bins, std::size_t d);

  std::size_t bins() const { return weight.value.dim(0); }
  std::size_t dim() const { return weight.value.dim(1); }
};

// planes [2, t, F] -> [2, t, d]
Var Project(Var planes, Var weight, Var bias);
Var Project(Graph& g, ComplexProjection& proj, Var planes);

}  // namespace sca_aec
