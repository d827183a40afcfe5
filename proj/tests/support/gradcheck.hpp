#pragma once

// Central finite-difference oracle. Independent of the op implementations:
// it only ever evaluates forward values and perturbs leaf storage directly.

#include "scn/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace scn::testing {

struct GradCheckResult {
  double worst_relative_error = 0.0;
  std::string worst_parameter;
};

/// Norm-wise relative error ||analytic - numeric|| / max(||analytic||,
/// ||numeric||, floor), evaluated per parameter tensor; reports the worst.
/// With max_coords > 0 only that many evenly spaced coordinates of each
/// tensor are perturbed and compared.
inline GradCheckResult check_gradients(const std::function<Tensor<double>()>& loss_fn,
                                       std::vector<std::pair<std::string, Tensor<double>>> params,
                                       double step = 1e-3, double floor = 1e-12,
                                       Index max_coords = 0) {
  for (auto& [name, p] : params) p.zero_grad();
  Tensor<double> loss = loss_fn();
  backward(loss);
  GradCheckResult result;
  for (auto& [name, p] : params) {
    std::vector<Index> coords;
    const Index count = max_coords > 0 ? std::min(max_coords, p.size()) : p.size();
    for (Index c = 0; c < count; ++c) coords.push_back(c * p.size() / count);
    VectorX<double> analytic(count);
    VectorX<double> numeric(count);
    NoGradGuard guard;
    for (Index c = 0; c < count; ++c) {
      const Index i = coords[static_cast<std::size_t>(c)];
      analytic[c] = p.grad()[i];
      const double saved = p.value()[i];
      p.mutable_value()[i] = saved + step;
      const double up = loss_fn().item();
      p.mutable_value()[i] = saved - step;
      const double down = loss_fn().item();
      p.mutable_value()[i] = saved;
      numeric[c] = (up - down) / (2.0 * step);
    }
    const double denom = std::max({analytic.norm(), numeric.norm(), floor});
    const double rel = (analytic - numeric).norm() / denom;
    if (rel >= result.worst_relative_error) {
      result.worst_relative_error = rel;
      result.worst_parameter = name;
    }
  }
  for (auto& [name, p] : params) p.zero_grad();
  return result;
}

}  // namespace scn::testing
