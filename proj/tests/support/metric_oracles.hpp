#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mmb/numerics/rng.hpp"

// Deliberately naive reference implementations of the text metrics.
namespace mmb::testing {

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Oracles work on already-normalized text (random lowercase words, single spaces).
inline double naive_f1(const std::string& h, const std::string& r) {
  auto ht = split_ws(h), rt = split_ws(r);
  if (ht.empty() || rt.empty()) return 0;
  std::vector<bool> used(rt.size(), false);
  double overlap = 0;
  for (const auto& t : ht)
    for (std::size_t j = 0; j < rt.size(); ++j)
      if (!used[j] && rt[j] == t) {
        used[j] = true;
        ++overlap;
        break;
      }
  if (overlap == 0) return 0;
  const double p = overlap / ht.size(), rc = overlap / rt.size();
  return 2 * p * rc / (p + rc);
}

inline std::vector<std::string> grams(const std::vector<std::string>& t, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    std::string g;
    for (std::size_t k = 0; k < n; ++k) g += t[i + k] + "|";
    out.push_back(g);
  }
  return out;
}

inline double naive_bleu(const std::string& h, const std::string& r) {
  auto ht = split_ws(h), rt = split_ws(r);
  if (ht.empty() || rt.empty()) return 0;
  double logp = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto hg = grams(ht, n), rg = grams(rt, n);
    double matched = 0;
    std::vector<bool> used(rg.size(), false);
    for (const auto& g : hg)
      for (std::size_t j = 0; j < rg.size(); ++j)
        if (!used[j] && rg[j] == g) {
          used[j] = true;
          ++matched;
          break;
        }
    logp += std::log(matched == 0 ? 1e-9 : matched / hg.size());
  }
  const double bp = ht.size() > rt.size() ? 1.0 : std::exp(1.0 - double(rt.size()) / ht.size());
  return bp * std::exp(logp / 4);
}

inline bool is_subsequence(const std::vector<std::string>& s, const std::vector<std::string>& of) {
  std::size_t j = 0;
  for (const auto& t : of)
    if (j < s.size() && s[j] == t) ++j;
  return j == s.size();
}

// Brute force over every subsequence of the hypothesis.
inline std::size_t brute_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t best = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << a.size()); ++mask) {
    std::vector<std::string> sub;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (mask >> i & 1) sub.push_back(a[i]);
    if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
  }
  return best;
}

inline double naive_rouge(const std::string& h, const std::string& r) {
  auto ht = split_ws(h), rt = split_ws(r);
  if (ht.empty() || rt.empty()) return 0;
  const double l = brute_lcs(ht, rt);
  if (l == 0) return 0;
  const double p = l / ht.size(), rc = l / rt.size(), b2 = 1.2 * 1.2;
  return (1 + b2) * p * rc / (rc + b2 * p);
}

inline std::string random_sentence(num::SplitMix64& rng, std::size_t max_len) {
  static const std::vector<std::string> words = {"a", "b", "c", "d", "e", "the", "cat"};
  std::string s;
  const auto n = rng.below(max_len + 1);
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + words[rng.below(words.size())];
  return s;
}

}  // namespace mmb::testing
