#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icrl/rng.hpp"
#include "icrl/tensor.hpp"

namespace icrl::nn {

struct GradCheckResult {
  double max_rel_err = 0;
  int64_t coords_checked = 0;
  std::string worst_coord;

  bool pass(double tol) const { return max_rel_err < tol; }
};

/// Central finite differences against analytic gradients on randomly sampled
/// parameter coordinates. loss_fn re-evaluates the loss with the (mutated)
/// params; the checker perturbs in place and restores. Run with Real = double.
template <typename Real>
GradCheckResult finite_diff_check(std::vector<Tensor<Real>>& params,
                                  const std::vector<Tensor<Real>>& analytic,
                                  const std::function<double()>& loss_fn, int64_t n_coords,
                                  uint64_t seed, double h = 1e-5) {
  int64_t total = 0;
  for (const auto& p : params) total += p.size();
  GradCheckResult result;
  Rng rng(seed);
  for (int64_t c = 0; c < n_coords; ++c) {
    int64_t flat = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(total)));
    size_t t = 0;
    while (flat >= params[t].size()) {
      flat -= params[t].size();
      ++t;
    }
    Real* slot = params[t].data() + flat;
    const Real saved = *slot;
    const double step = h * std::max(1.0, std::abs(static_cast<double>(saved)));
    *slot = saved + static_cast<Real>(step);
    const double up = loss_fn();
    *slot = saved - static_cast<Real>(step);
    const double down = loss_fn();
    *slot = saved;
    const double fd = (up - down) / (2.0 * step);
    const double an = static_cast<double>(analytic[t][flat]);
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    const double rel = std::abs(fd - an) / denom;
    if (rel > result.max_rel_err) {
      result.max_rel_err = rel;
      result.worst_coord = "param " + std::to_string(t) + " flat " + std::to_string(flat);
    }
    ++result.coords_checked;
  }
  return result;
}

}  // namespace icrl::nn
