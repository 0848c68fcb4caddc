#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mmb::decode {

/// Next-token distribution over a fixed vocabulary, conditioned on whatever
/// the implementation was bound to (encoder memory, a lookup table, ...).
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual int bos_id() const = 0;
  virtual int eos_id() const = 0;
  /// Log-probabilities for the token following prefix; prefix[0] is bos.
  virtual std::vector<double> next_log_probs(std::span<const int> prefix) = 0;
};

}  // namespace mmb::decode
