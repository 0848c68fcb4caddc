#include "mmb/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mmb/numerics/rng.hpp"

namespace mmb::num {

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss,
                           std::vector<std::pair<std::string, Tensor<double>*>> params,
                           const GradCheckOptions& options) {
  GradCheckResult result;
  if (params.empty()) return result;

  for (auto& [name, p] : params) p->zero_grad();
  {
    auto root = loss();
    backward(root);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) {
    if (p->has_grad()) {
      analytic.emplace_back(p->grad().begin(), p->grad().end());
    } else {
      analytic.emplace_back(p->numel(), 0.0);
    }
  }

  NoGradGuard no_grad;
  SplitMix64 rng(options.seed);
  for (std::size_t s = 0; s < options.samples; ++s) {
    const std::size_t pi = rng.below(params.size());
    auto* p = params[pi].second;
    const std::size_t idx = rng.below(p->numel());
    auto values = p->mutable_data();
    const double original = values[idx];
    values[idx] = original + options.step;
    const double up = loss().item();
    values[idx] = original - options.step;
    const double down = loss().item();
    values[idx] = original;

    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[pi][idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    const double rel = std::abs(a - numeric) / denom;
    ++result.coordinates;
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_param = params[pi].first;
      result.worst_index = idx;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace mmb::num
