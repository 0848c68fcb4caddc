#include "mmb/decode/beam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace mmb::decode {

void BeamConfig::validate() const {
  if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
  if (min_length >= max_length) {
    throw std::invalid_argument("min_length (" + std::to_string(min_length) +
                                ") must be < max_length (" + std::to_string(max_length) + ")");
  }
  if (block_ngram < 1) throw std::invalid_argument("block_ngram must be >= 1");
}

namespace {

void ban_from(std::span<const int> source, std::span<const int> suffix, std::set<int>& out) {
  const std::size_t k = suffix.size();
  if (source.size() < k + 1) return;
  for (std::size_t i = 0; i + k < source.size(); ++i) {
    if (std::equal(suffix.begin(), suffix.end(), source.begin() + static_cast<std::ptrdiff_t>(i))) {
      out.insert(source[i + k]);
    }
  }
}

}  // namespace

std::set<int> find_banned_tokens(std::span<const int> hypothesis, std::span<const int> context,
                                 std::size_t n, bool within, bool from_context) {
  if (n < 1) throw std::invalid_argument("find_banned_tokens: n must be >= 1");
  std::set<int> banned;
  if (hypothesis.size() < n - 1) return banned;
  auto suffix = hypothesis.subspan(hypothesis.size() - (n - 1));
  if (within) ban_from(hypothesis, suffix, banned);
  if (from_context) ban_from(context, suffix, banned);
  return banned;
}

std::vector<std::uint8_t> allowed_tokens(std::span<const int> hypothesis, std::span<const int> context,
                                         std::size_t vocab_size, int eos, const BeamConfig& cfg,
                                         bool* relaxed) {
  std::vector<std::uint8_t> base(vocab_size, 1);
  for (int t : cfg.suppress)
    if (t >= 0 && static_cast<std::size_t>(t) < vocab_size) base[t] = 0;
  if (hypothesis.size() < cfg.min_length && eos >= 0 && static_cast<std::size_t>(eos) < vocab_size) {
    base[eos] = 0;
  }

  auto apply = [&](bool within, bool from_context) {
    auto allowed = base;
    if (within || from_context) {
      for (int t : find_banned_tokens(hypothesis, context, cfg.block_ngram, within, from_context)) {
        if (t >= 0 && static_cast<std::size_t>(t) < vocab_size) allowed[t] = 0;
      }
    }
    return allowed;
  };
  auto any = [](const std::vector<std::uint8_t>& a) {
    return std::any_of(a.begin(), a.end(), [](std::uint8_t x) { return x != 0; });
  };

  if (relaxed) *relaxed = false;
  auto allowed = apply(cfg.block_within_generation, cfg.block_from_context);
  if (any(allowed)) return allowed;
  if (relaxed) *relaxed = true;
  allowed = apply(cfg.block_within_generation, false);
  if (any(allowed)) return allowed;
  return base;
}

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end());
}

BeamResult beam_search(StepModel& model, std::span<const int> context, const BeamConfig& cfg) {
  cfg.validate();
  const std::size_t V = model.vocab_size();
  const int eos = model.eos_id();
  BeamResult result;

  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;
  std::vector<int> prefix;
  for (std::size_t step = 0; step < cfg.max_length && !live.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    for (const auto& h : live) {
      prefix.assign(1, model.bos_id());
      prefix.insert(prefix.end(), h.tokens.begin(), h.tokens.end());
      const auto lp = model.next_log_probs(prefix);
      ++result.model_calls;
      bool relaxed = false;
      const auto allowed = allowed_tokens(h.tokens, context, V, eos, cfg, &relaxed);
      if (relaxed) ++result.fallback_steps;
      for (std::size_t t = 0; t < V; ++t) {
        if (!allowed[t] || lp[t] == -std::numeric_limits<double>::infinity()) continue;
        Hypothesis c{h.tokens, h.log_prob + lp[t], static_cast<int>(t) == eos};
        c.tokens.push_back(static_cast<int>(t));
        candidates.push_back(std::move(c));
      }
    }
    if (candidates.empty()) break;
    const std::size_t keep = std::min(cfg.beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), ranks_before);
    candidates.resize(keep);

    std::vector<Hypothesis> next;
    for (auto& c : candidates) (c.finished ? finished : next).push_back(std::move(c));
    if (next.empty()) {
      live.clear();
      break;
    }
    live = std::move(next);

    // Log-probs are <= 0, so no live hypothesis can overtake this finished one.
    if (!finished.empty()) {
      const auto best_finished = *std::min_element(finished.begin(), finished.end(), ranks_before);
      const bool done = std::all_of(live.begin(), live.end(), [&](const Hypothesis& h) {
        return h.log_prob < best_finished.log_prob ||
               (h.log_prob == best_finished.log_prob && ranks_before(best_finished, h));
      });
      if (done) break;
    }
  }

  if (!finished.empty()) {
    result.best = *std::min_element(finished.begin(), finished.end(), ranks_before);
  } else if (!live.empty()) {
    result.best = *std::min_element(live.begin(), live.end(), ranks_before);
  }
  return result;
}

Hypothesis exhaustive_oracle(StepModel& model, std::span<const int> context, const BeamConfig& cfg) {
  cfg.validate();
  const std::size_t V = model.vocab_size();
  const int eos = model.eos_id();
  const double space = std::pow(static_cast<double>(V), static_cast<double>(cfg.max_length));
  if (space > 1e7) {
    throw SearchSpaceTooLarge("exhaustive_oracle: " + std::to_string(V) + "^" +
                              std::to_string(cfg.max_length) + " sequences exceed 1e7");
  }

  std::optional<Hypothesis> best_finished, best_unfinished;
  std::vector<int> prefix;
  Hypothesis current;

  auto consider = [](std::optional<Hypothesis>& slot, const Hypothesis& h) {
    if (!slot || ranks_before(h, *slot)) slot = h;
  };

  // Depth-first enumeration of every legal sequence.
  auto recurse = [&](auto&& self) -> void {
    if (current.tokens.size() == cfg.max_length) {
      consider(best_unfinished, current);
      return;
    }
    prefix.assign(1, model.bos_id());
    prefix.insert(prefix.end(), current.tokens.begin(), current.tokens.end());
    const auto lp = model.next_log_probs(prefix);
    const auto allowed = allowed_tokens(current.tokens, context, V, eos, cfg);
    bool extended = false;
    for (std::size_t t = 0; t < V; ++t) {
      if (!allowed[t] || lp[t] == -std::numeric_limits<double>::infinity()) continue;
      extended = true;
      const double saved = current.log_prob;
      current.tokens.push_back(static_cast<int>(t));
      current.log_prob = saved + lp[t];
      if (static_cast<int>(t) == eos) {
        current.finished = true;
        consider(best_finished, current);
        current.finished = false;
      } else {
        self(self);
      }
      current.tokens.pop_back();
      current.log_prob = saved;
    }
    if (!extended) consider(best_unfinished, current);
  };
  recurse(recurse);

  if (best_finished) return *best_finished;
  if (best_unfinished) return *best_unfinished;
  return {};
}

}  // namespace mmb::decode
