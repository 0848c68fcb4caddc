#include <set>

#include "doctest.h"
#include "mmb/decode/beam.hpp"
#include "test_support.hpp"

using namespace mmb;
using namespace mmb::decode;
using mmb::testing::TableModel;

namespace {

// Naive oracle: collect every n-gram, then test each candidate continuation.
std::set<int> naive_banned(const std::vector<int>& hyp, const std::vector<int>& ctx, std::size_t n,
                           std::size_t vocab) {
  std::set<std::vector<int>> grams;
  auto collect = [&](const std::vector<int>& seq) {
    for (std::size_t i = 0; i + n <= seq.size(); ++i) grams.insert({seq.begin() + i, seq.begin() + i + n});
  };
  collect(hyp);
  collect(ctx);
  std::set<int> out;
  if (hyp.size() < n - 1) return out;
  for (std::size_t t = 0; t < vocab; ++t) {
    std::vector<int> g(hyp.end() - static_cast<std::ptrdiff_t>(n - 1), hyp.end());
    g.push_back(static_cast<int>(t));
    if (grams.count(g)) out.insert(static_cast<int>(t));
  }
  return out;
}

bool has_repeated_ngram(const std::vector<int>& seq, std::size_t n) {
  std::set<std::vector<int>> seen;
  for (std::size_t i = 0; i + n <= seq.size(); ++i)
    if (!seen.insert({seq.begin() + i, seq.begin() + i + n}).second) return true;
  return false;
}

bool shares_ngram(const std::vector<int>& seq, const std::vector<int>& ctx, std::size_t n) {
  std::set<std::vector<int>> grams;
  for (std::size_t i = 0; i + n <= ctx.size(); ++i) grams.insert({ctx.begin() + i, ctx.begin() + i + n});
  for (std::size_t i = 0; i + n <= seq.size(); ++i)
    if (grams.count({seq.begin() + i, seq.begin() + i + n})) return true;
  return false;
}

std::vector<int> random_context(num::SplitMix64& rng, std::size_t vocab, std::size_t max_len) {
  std::vector<int> ctx(rng.below(max_len + 1));
  for (auto& t : ctx) t = 2 + static_cast<int>(rng.below(vocab - 2));
  return ctx;
}

// Peaked unigram model: token `favourite` gets almost all mass at every step.
class UnigramModel : public StepModel {
 public:
  UnigramModel(std::size_t vocab, int favourite) : vocab_(vocab), favourite_(favourite) {}
  std::size_t vocab_size() const override { return vocab_; }
  int bos_id() const override { return 0; }
  int eos_id() const override { return 1; }
  std::vector<double> next_log_probs(std::span<const int>) override {
    std::vector<double> logits(vocab_, 0.0);
    logits[favourite_] = 12.0;
    logits[1] = 1.0;
    double z = 0;
    for (double l : logits) z += std::exp(l);
    for (auto& l : logits) l -= std::log(z);
    return logits;
  }

 private:
  std::size_t vocab_;
  int favourite_;
};

}  // namespace

TEST_CASE("find_banned_tokens: definition cases") {
  const int a = 5, b = 6, c = 7;
  CHECK(find_banned_tokens(std::vector<int>{a, b, c, a, b}, {}, 3) == std::set<int>{c});
  CHECK(find_banned_tokens(std::vector<int>{a}, std::vector<int>{a, b, c}, 3).empty());
  CHECK(find_banned_tokens(std::vector<int>{c, a, b}, std::vector<int>{a, b, 9}, 3) == std::set<int>{9});
  CHECK(find_banned_tokens(std::vector<int>{c, a, b}, std::vector<int>{a, b, 9}, 3, true, false).empty());
  CHECK(find_banned_tokens(std::vector<int>{a, b, a}, {}, 1) == std::set<int>{a, b});
  CHECK_THROWS(find_banned_tokens(std::vector<int>{a}, {}, 0));
}

TEST_CASE("find_banned_tokens agrees with a naive n-gram scan") {
  num::SplitMix64 rng(5);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t vocab = 3 + rng.below(4), n = 1 + rng.below(4);
    auto hyp = random_context(rng, vocab, 10);
    auto ctx = random_context(rng, vocab, 10);
    CHECK(find_banned_tokens(hyp, ctx, n) == naive_banned(hyp, ctx, n, vocab));
  }
}

TEST_CASE("config validation") {
  BeamConfig c;
  CHECK_NOTHROW(c.validate());
  c.min_length = c.max_length;
  CHECK_THROWS(c.validate());
  BeamConfig zero;
  zero.beam_size = 0;
  CHECK_THROWS(zero.validate());
}

TEST_CASE("peaked unigram model is forced off the repeated trigram") {
  UnigramModel model(4, 2);
  BeamConfig cfg;
  cfg.beam_size = 3;
  cfg.min_length = 4;
  cfg.max_length = 6;
  cfg.block_from_context = false;
  cfg.suppress = {0};
  auto out = beam_search(model, {}, cfg);
  REQUIRE(out.best.tokens.size() >= 4);
  CHECK(std::vector<int>(out.best.tokens.begin(), out.best.tokens.begin() + 4) == std::vector<int>{2, 2, 2, 3});
  CHECK_FALSE(has_repeated_ngram(out.best.tokens, 3));

  auto oracle = exhaustive_oracle(model, {}, cfg);
  CHECK(oracle.tokens == std::vector<int>{2, 2, 2, 3, 1});
  cfg.beam_size = 4096;
  CHECK(beam_search(model, {}, cfg).best.tokens == oracle.tokens);

  cfg.block_within_generation = false;
  auto free = beam_search(model, {}, cfg);
  CHECK(free.best.tokens == std::vector<int>{2, 2, 2, 2, 1});
}

TEST_CASE("single-token vocabulary yields the only legal sequence") {
  TableModel model(1, 3, 0, 0);
  BeamConfig cfg;
  cfg.beam_size = 2;
  cfg.min_length = 0;
  cfg.max_length = 3;
  auto oracle = exhaustive_oracle(model, {}, cfg);
  CHECK(oracle.tokens == std::vector<int>{0});
  CHECK(oracle.finished);
  CHECK(beam_search(model, {}, cfg).best.tokens == oracle.tokens);
}

TEST_CASE("saturated beam equals the exhaustive oracle") {
  num::SplitMix64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    TableModel model(5, 1000 + trial);
    BeamConfig cfg;
    cfg.beam_size = 625;
    cfg.max_length = 4;
    cfg.min_length = rng.below(3);
    auto ctx = random_context(rng, 5, 6);
    auto beam = beam_search(model, ctx, cfg);
    auto oracle = exhaustive_oracle(model, ctx, cfg);
    CHECK(beam.best.tokens == oracle.tokens);
    CHECK(beam.best.log_prob == doctest::Approx(oracle.log_prob).epsilon(1e-12));
    CHECK_FALSE(has_repeated_ngram(oracle.tokens, 3));
    CHECK_FALSE(shares_ngram(oracle.tokens, ctx, 3));
  }
}

TEST_CASE("min length, blocking and fallback over many random decodes") {
  num::SplitMix64 rng(123);
  std::size_t fallbacks = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    TableModel model(24, 5000 + trial);
    BeamConfig cfg;
    cfg.beam_size = 1 + rng.below(5);
    cfg.min_length = 5;
    cfg.max_length = 12;
    auto ctx = random_context(rng, 24, 20);
    auto out = beam_search(model, ctx, cfg);
    fallbacks += out.fallback_steps;
    auto body = out.best.tokens;
    if (out.best.finished) {
      CHECK(body.back() == model.eos_id());
      body.pop_back();
    }
    CHECK(body.size() >= cfg.min_length);
    CHECK_FALSE(has_repeated_ngram(out.best.tokens, 3));
    CHECK_FALSE(shares_ngram(out.best.tokens, ctx, 3));
  }
  CHECK(fallbacks == 0);
}

TEST_CASE("hypothesis scores never exceed the exhaustive optimum") {
  // Larger beams are not guaranteed to score higher, but no finished beam output
  // can beat the optimum. Small beams may end with only unfinished hypotheses.
  for (int trial = 0; trial < 40; ++trial) {
    TableModel model(4, 9000 + trial);
    BeamConfig cfg;
    cfg.min_length = 1;
    cfg.max_length = 5;
    const auto oracle = exhaustive_oracle(model, {}, cfg);
    for (std::size_t b : {1, 2, 3, 5, 8, 1024}) {
      cfg.beam_size = b;
      const auto out = beam_search(model, {}, cfg);
      if (out.best.finished) CHECK(out.best.log_prob <= oracle.log_prob + 1e-12);
      if (b == 1024) CHECK(out.best.tokens == oracle.tokens);
    }
  }
}

TEST_CASE("all-banned steps relax context blocking first") {
  // Vocab {bos=0, eos=1, 2}: after "2 2" the context trigram "2 2 2" bans the only content token.
  TableModel model(3, 4, 0, 1);
  BeamConfig cfg;
  cfg.beam_size = 1;
  cfg.min_length = 3;
  cfg.max_length = 4;
  cfg.block_within_generation = false;
  cfg.suppress = {0};
  bool relaxed = false;
  auto allowed = allowed_tokens(std::vector<int>{2, 2}, std::vector<int>{2, 2, 2}, 3, 1, cfg, &relaxed);
  CHECK(relaxed);
  CHECK(allowed == std::vector<std::uint8_t>{0, 0, 1});
  auto out = beam_search(model, std::vector<int>{2, 2, 2}, cfg);
  CHECK(out.fallback_steps > 0);
}

TEST_CASE("exhaustive oracle rejects oversized search spaces") {
  TableModel model(10, 1);
  BeamConfig cfg;
  cfg.min_length = 0;
  cfg.max_length = 8;
  CHECK_THROWS_AS(exhaustive_oracle(model, {}, cfg), SearchSpaceTooLarge);
}

TEST_CASE("a larger beam can return a lower-scoring finished hypothesis") {
  TableModel model(4, 102);
  BeamConfig cfg;
  cfg.min_length = 1;
  cfg.max_length = 5;
  cfg.beam_size = 1;
  const auto narrow = beam_search(model, {}, cfg).best;
  cfg.beam_size = 2;
  const auto wide = beam_search(model, {}, cfg).best;
  REQUIRE(narrow.finished);
  REQUIRE(wide.finished);
  CHECK(wide.log_prob < narrow.log_prob);
}
