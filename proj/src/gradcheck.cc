#include "sca_aec/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sca_aec/error.h"

namespace sca_aec {
namespace {

std::vector<std::size_t> PickCoords(std::size_t n, std::size_t max_coords,
                                    std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (max_coords == 0 || max_coords >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double ScalarOf(const Var& v) {
  if (v.value().size() != 1) FailUsage("grad_check: function must be scalar-valued");
  return v.value()[0];
}

}  // namespace

double RelativeError(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult GradCheck(const std::function<Var(Graph&, Var)>& f,
                          const Tensor& x, double h, std::size_t max_coords,
                          std::uint64_t seed) {
  Parameter p{"x", x, Tensor(x.shape()), true};
  return GradCheckParams([&](Graph& g) { return f(g, g.Param(p)); }, {&p}, h,
                         max_coords, seed);
}

GradCheckResult GradCheckParams(const std::function<Var(Graph&)>& f,
                                const std::vector<Parameter*>& params,
                                double h, std::size_t max_coords_per_param,
                                std::uint64_t seed) {
  GradCheckResult result;
  GradientMap grads;
  {
    Graph g(true);
    Var loss = f(g);
    ScalarOf(loss);
    result.min_kink = g.min_kink();
    g.Backward(loss, grads);
  }
  std::mt19937_64 rng(seed);
  for (Parameter* p : params) {
    const auto it = grads.find(p);
    for (std::size_t i : PickCoords(p->value.size(), max_coords_per_param, rng)) {
      const double analytic = it == grads.end() ? 0.0 : it->second[i];
      const double orig = p->value[i];
      p->value[i] = orig + h;
      double up;
      {
        Graph g(false);
        up = ScalarOf(f(g));
      }
      p->value[i] = orig - h;
      double down;
      {
        Graph g(false);
        down = ScalarOf(f(g));
      }
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      result.max_rel_error =
          std::max(result.max_rel_error, RelativeError(analytic, numeric));
      ++result.coords_checked;
    }
  }
  return result;
}

}  // namespace sca_aec
