#include "mmb/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace mmb::eval {

namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[{toks.begin() + i, toks.begin() + i + n}];
  return out;
}

}  // namespace

std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_ascii_punct(c)) continue;
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string normalize(std::string_view text) {
  std::string out;
  for (const auto& t : normalize_tokens(text)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

double f1(std::string_view hyp, std::string_view ref) {
  const auto h = normalize_tokens(hyp), r = normalize_tokens(ref);
  if (h.empty() || r.empty()) return 0.0;
  auto hc = ngram_counts(h, 1), rc = ngram_counts(r, 1);
  std::size_t overlap = 0;
  for (const auto& [g, c] : hc) {
    auto it = rc.find(g);
    if (it != rc.end()) overlap += std::min(c, it->second);
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(h.size());
  const double rec = static_cast<double>(overlap) / static_cast<double>(r.size());
  return 2 * p * rec / (p + rec);
}

double bleu4(std::string_view hyp, std::string_view ref) {
  const auto h = normalize_tokens(hyp), r = normalize_tokens(ref);
  if (h.empty() || r.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto hc = ngram_counts(h, n), rc = ngram_counts(r, n);
    std::size_t matches = 0, total = 0;
    for (const auto& [g, c] : hc) {
      total += c;
      auto it = rc.find(g);
      if (it != rc.end()) matches += std::min(c, it->second);
    }
    const double p = matches == 0 ? kBleuEpsilon : static_cast<double>(matches) / static_cast<double>(total);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(h.size()), rl = static_cast<double>(r.size());
  const double bp = c > rl ? 1.0 : std::exp(1.0 - rl / c);
  return bp * std::exp(log_sum / 4.0);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view hyp, std::string_view ref) {
  const auto h = normalize_tokens(hyp), r = normalize_tokens(ref);
  if (h.empty() || r.empty()) return 0.0;
  const auto l = static_cast<double>(lcs_length(h, r));
  if (l == 0) return 0.0;
  const double p = l / static_cast<double>(h.size()), rec = l / static_cast<double>(r.size());
  const double b2 = kRougeBeta * kRougeBeta;
  return (1 + b2) * p * rec / (rec + b2 * p);
}

double perplexity_from_log_probs(const std::vector<double>& token_log_probs) {
  if (token_log_probs.empty()) throw std::invalid_argument("perplexity over zero tokens");
  double s = 0.0;
  for (double lp : token_log_probs) s += lp;
  return std::exp(-s / static_cast<double>(token_log_probs.size()));
}

}  // namespace mmb::eval
