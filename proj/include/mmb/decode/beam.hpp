#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <span>
#include <vector>

#include "mmb/decode/step_model.hpp"

namespace mmb::decode {

struct BeamConfig {
  std::size_t beam_size = 10;
  std::size_t min_length = 20;  // eos forbidden until this many tokens exist
  std::size_t max_length = 40;  // generated tokens, eos included
  std::size_t block_ngram = 3;
  bool block_within_generation = true;
  bool block_from_context = true;
  /// Token ids that may never be generated (pad, bos, ...).
  std::vector<int> suppress;

  void validate() const;
};

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens; ends with eos iff finished
  double log_prob = 0.0;
  bool finished = false;
};

struct BeamResult {
  Hypothesis best;
  /// Steps where every token was banned and blocking had to be relaxed.
  std::size_t fallback_steps = 0;
  std::size_t model_calls = 0;
};

/// Tokens t such that the last n-1 hypothesis tokens followed by t form an
/// n-gram already present in the hypothesis (when within) or the context.
std::set<int> find_banned_tokens(std::span<const int> hypothesis, std::span<const int> context,
                                 std::size_t n = 3, bool within = true, bool from_context = true);

/// Legal next tokens for a partial hypothesis under cfg. When blocking bans
/// every token, context blocking is dropped first, then generation blocking;
/// `relaxed` reports that this happened.
std::vector<std::uint8_t> allowed_tokens(std::span<const int> hypothesis, std::span<const int> context,
                                         std::size_t vocab_size, int eos, const BeamConfig& cfg,
                                         bool* relaxed = nullptr);

/// Beam search on raw cumulative log-probability. Each step keeps the top
/// beam_size expansions (equal scores: lexicographically smaller sequence
/// first); expansions ending in eos are finished. The search stops once the
/// best finished score is at least every live score, or at max_length.
/// Returns the best finished hypothesis, else the best unfinished one.
BeamResult beam_search(StepModel& model, std::span<const int> context, const BeamConfig& cfg);

class SearchSpaceTooLarge : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Enumerates every sequence allowed by cfg (beam_size ignored) and returns
/// the argmax under the same ranking and fallback rules as beam_search.
/// Requires vocab_size^max_length <= 1e7.
Hypothesis exhaustive_oracle(StepModel& model, std::span<const int> context, const BeamConfig& cfg);

/// True if a is ranked before b: higher log-prob, then lexicographically smaller tokens.
bool ranks_before(const Hypothesis& a, const Hypothesis& b);

}  // namespace mmb::decode
