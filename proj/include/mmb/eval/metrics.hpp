#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mmb::eval {

/// Normalizer version "v1": ASCII lowercase, ASCII punctuation removed,
/// whitespace runs collapsed. Returns the resulting tokens.
std::vector<std::string> normalize_tokens(std::string_view text);
std::string normalize(std::string_view text);

inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr double kRougeBeta = 1.2;

/// Unigram F1 with multiset overlap. Empty input on either side gives 0.
double f1(std::string_view hyp, std::string_view ref);

/// Geometric mean of clipped 1..4-gram precisions times the brevity penalty.
/// A precision with zero matches (or no hypothesis n-grams) counts as kBleuEpsilon.
double bleu4(std::string_view hyp, std::string_view ref);

/// LCS F-measure with beta = 1.2.
double rouge_l(std::string_view hyp, std::string_view ref);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// exp(-mean log-prob). Throws std::invalid_argument when empty.
double perplexity_from_log_probs(const std::vector<double>& token_log_probs);

}  // namespace mmb::eval
