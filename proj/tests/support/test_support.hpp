#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <span>
#include <vector>

#include "mmb/decode/step_model.hpp"
#include "mmb/numerics/rng.hpp"
#include "mmb/numerics/tensor.hpp"

namespace mmb::testing {

template <typename T>
std::vector<T> random_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  num::SplitMix64 rng(seed);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>((rng.uniform() * 2.0 - 1.0) * scale);
  return v;
}

template <typename T>
num::Tensor<T> random_param(num::Shape shape, std::uint64_t seed, double scale = 1.0) {
  return num::Tensor<T>::parameter(shape, random_values<T>(num::shape_numel(shape), seed, scale));
}

template <typename T>
num::Tensor<T> random_const(num::Shape shape, std::uint64_t seed, double scale = 1.0) {
  return num::Tensor<T>::constant(shape, random_values<T>(num::shape_numel(shape), seed, scale));
}

/// Step model whose next-token distribution is a hash of the full prefix.
class TableModel : public decode::StepModel {
 public:
  TableModel(std::size_t vocab, std::uint64_t seed, int bos = 0, int eos = 1, double temperature = 3.0)
      : vocab_(vocab), seed_(seed), bos_(bos), eos_(eos), temperature_(temperature) {}

  std::size_t vocab_size() const override { return vocab_; }
  int bos_id() const override { return bos_; }
  int eos_id() const override { return eos_; }

  std::vector<double> next_log_probs(std::span<const int> prefix) override {
    std::uint64_t h = seed_ ^ 0x51ED270B27E3A5B9ULL;
    for (int t : prefix) h = num::mix_seed(h, static_cast<std::uint64_t>(t) + 1);
    num::SplitMix64 rng(h);
    std::vector<double> logits(vocab_);
    double mx = -std::numeric_limits<double>::infinity();
    for (auto& l : logits) {
      l = (rng.uniform() * 2.0 - 1.0) * temperature_;
      mx = std::max(mx, l);
    }
    double s = 0.0;
    for (double l : logits) s += std::exp(l - mx);
    const double lse = mx + std::log(s);
    for (auto& l : logits) l -= lse;
    return logits;
  }

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
  int bos_, eos_;
  double temperature_;
};


/// Checks a generated reply (eos stripped) against the decoding contract by brute force:
/// no banned ids, no eos inside, length bounds, and no repeated or context-copied trigram
/// unless the search reported a relaxed step.
inline std::optional<std::string> reply_violation(const std::vector<int>& tokens, const std::vector<int>& context,
                                                  bool finished, std::size_t fallback_steps, std::size_t min_length,
                                                  std::size_t max_length, const std::vector<int>& banned, int eos) {
  for (int t : tokens) {
    if (t == eos) return "eos inside reply";
    for (int b : banned)
      if (t == b) return "banned id " + std::to_string(t);
  }
  if (finished && tokens.size() < min_length) return "shorter than min_length";
  if (!finished && tokens.size() != max_length) return "unfinished reply below max_length";
  if (finished && tokens.size() + 1 > max_length) return "longer than max_length";
  if (fallback_steps > 0) return std::nullopt;
  std::set<std::vector<int>> seen, ctx;
  for (std::size_t i = 0; i + 3 <= context.size(); ++i) ctx.insert({context.begin() + i, context.begin() + i + 3});
  for (std::size_t i = 0; i + 3 <= tokens.size(); ++i) {
    std::vector<int> g(tokens.begin() + i, tokens.begin() + i + 3);
    if (!seen.insert(g).second) return "repeated trigram";
    if (ctx.count(g)) return "trigram copied from context";
  }
  return std::nullopt;
}

}  // namespace mmb::testing
