#include "mmb/numerics/adam.hpp"

#include <cmath>

namespace mmb::num {

Adam::Adam(AdamOptions options, const std::vector<std::string>& names,
           const std::vector<std::size_t>& sizes)
    : options_(options) {
  if (names.size() != sizes.size()) throw DimensionError("Adam: names/sizes length mismatch");
  if (!(options_.lr >= 0.0)) throw std::invalid_argument("Adam: learning rate must be >= 0");
  slots_.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    slots_.push_back({names[i], std::vector<double>(sizes[i], 0.0), std::vector<double>(sizes[i], 0.0)});
  }
}

double Adam::effective_lr(std::size_t step) const {
  if (options_.warmup_steps == 0 || step >= options_.warmup_steps) return options_.lr;
  return options_.lr * static_cast<double>(step) / static_cast<double>(options_.warmup_steps);
}

template <typename T>
void Adam::step(std::vector<Tensor<T>*>& params) {
  if (params.size() != slots_.size()) throw DimensionError("Adam: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->numel() != slots_[i].m.size()) {
      throw DimensionError("Adam: size of parameter " + slots_[i].name + " changed");
    }
    if (!params[i]->has_grad()) continue;
    for (T g : params[i]->grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("Adam: non-finite gradient for parameter " + slots_[i].name);
      }
    }
  }

  ++step_;
  const double lr = effective_lr(step_);
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& slot = slots_[i];
    const bool has = params[i]->has_grad();
    auto grad = params[i]->grad();
    auto value = params[i]->mutable_data();
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = has ? static_cast<double>(grad[j]) : 0.0;
      slot.m[j] = b1 * slot.m[j] + (1.0 - b1) * g;
      slot.v[j] = b2 * slot.v[j] + (1.0 - b2) * g * g;
      const double mhat = slot.m[j] / c1;
      const double vhat = slot.v[j] / c2;
      value[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + options_.eps));
    }
  }
}

template void Adam::step<float>(std::vector<Tensor<float>*>&);
template void Adam::step<double>(std::vector<Tensor<double>*>&);

}  // namespace mmb::num
