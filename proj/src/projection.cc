#include "sca_aec/projection.h"

#include "sca_aec/error.h"
#include "sca_aec/ops.h"

namespace sca_aec {

ComplexProjection::ComplexProjection(const std::string& name, std::size_t bins, std::size_t d)
    : weight{name + ".weight", Tensor({bins, d}), {}, true},
      bias{name + ".bias", Tensor({d}), {}, true} {}

Var Project(Var planes, Var weight, Var bias) {
  const Shape& s = planes.shape();
  if (s.size() != 3 || s[0] != 2) {
    FailUsage("project: expected planes [2, t, F], got " + ShapeString(s));
  }
  if (weight.shape().size() != 2 || weight.shape()[0] != s[2]) {
    FailUsage("project: " + std::to_string(s[2]) + " bins do not match weight " +
              ShapeString(weight.shape()));
  }
  const std::size_t t = s[1], d = weight.shape()[1];
  // Both planes go through the same matmul as one [2t, F] block.
  Var flat = ops::Reshape(planes, {2 * t, s[2]});
  return ops::Reshape(ops::Linear(flat, weight, bias), {2, t, d});
}

Var Project(Graph& g, ComplexProjection& proj, Var planes) {
  return Project(planes, g.Param(proj.weight), g.Param(proj.bias));
}

}  // namespace sca_aec
