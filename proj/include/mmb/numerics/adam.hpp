#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mmb/numerics/tensor.hpp"

namespace mmb::num {

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t warmup_steps = 100;
};

/// Adam with bias correction and linear warmup. The learning rate ramps
/// from 0 to lr over warmup_steps and stays flat afterwards.
class Adam {
 public:
  struct Slot {
    std::string name;
    std::vector<double> m;
    std::vector<double> v;
  };

  Adam(AdamOptions options, const std::vector<std::string>& names,
       const std::vector<std::size_t>& sizes);

  /// One update. params[i] is updated from its own grad; parameters without a
  /// grad buffer are treated as having zero gradient. Throws NumericError naming
  /// the first parameter with a non-finite gradient (params untouched).
  template <typename T>
  void step(std::vector<Tensor<T>*>& params);

  /// Learning rate applied at a given 1-based step.
  double effective_lr(std::size_t step) const;

  std::size_t steps_taken() const { return step_; }
  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  AdamOptions options_;
  std::size_t step_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace mmb::num
