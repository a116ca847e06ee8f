#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sca_aec/autograd.h"

namespace sca_aec {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double min_kink = 0.0;  // smallest kink distance seen at the base point
  std::size_t coords_checked = 0;
};

// Relative error |a - c| / max(1e-8, |a| + |c|) between the analytic gradient
// and a central finite difference at step h.
double RelativeError(double analytic, double numeric);

// f maps an input leaf to a scalar. When max_coords > 0 only that many
// coordinates, drawn with `seed`, are perturbed.
GradCheckResult GradCheck(const std::function<Var(Graph&, Var)>& f,
                          const Tensor& x, double h = 1e-5,
                          std::size_t max_coords = 0, std::uint64_t seed = 0);

// Same, over model parameters; f builds the scalar from Param leaves.
GradCheckResult GradCheckParams(const std::function<Var(Graph&)>& f,
                                const std::vector<Parameter*>& params,
                                double h = 1e-5,
                                std::size_t max_coords_per_param = 0,
                                std::uint64_t seed = 0);

}  // namespace sca_aec
