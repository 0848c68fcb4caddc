#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmb/numerics/tensor.hpp"

namespace mmb::num {

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t samples = 200;
  std::uint64_t seed = 7;
  // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  // coordinates with vanishing gradient from dividing by roundoff.
  double floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of loss() against central differences.
/// loss() must rebuild its graph from the current parameter values each call.
/// Coordinates are sampled by first picking a parameter uniformly, then an entry.
GradCheckResult grad_check(const std::function<Tensor<double>()>& loss,
                           std::vector<std::pair<std::string, Tensor<double>*>> params,
                           const GradCheckOptions& options = {});

}  // namespace mmb::num
