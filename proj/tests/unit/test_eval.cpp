#include <cmath>
#include <map>

#include "doctest.h"
#include "mmb/eval/metrics.hpp"
#include "mmb/eval/report.hpp"
#include "mmb/model/transformer.hpp"
#include "metric_oracles.hpp"
#include "test_support.hpp"

using namespace mmb;
using namespace mmb::eval;
using namespace mmb::testing;

namespace {
model::ModelConfig tiny(std::size_t vocab) {
  model::ModelConfig c;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ffn = 32;
  c.vocab_size = vocab;
  c.max_positions = 32;
  c.fusion = model::Fusion::None;
  return c;
}

text::Batch id_batch(std::size_t vocab, std::uint64_t seed) {
  num::SplitMix64 rng(seed);
  std::vector<std::vector<int>> ctx(3), lab(3);
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t i = 0; i < 3 + b; ++i) ctx[b].push_back(4 + static_cast<int>(rng.below(vocab - 4)));
    for (std::size_t i = 0; i < 2 + 2 * b; ++i) lab[b].push_back(4 + static_cast<int>(rng.below(vocab - 4)));
  }
  return text::make_batch_from_ids(ctx, lab, {nullptr, nullptr, nullptr}, {});
}

}  // namespace

TEST_CASE("normalizer") {
  CHECK(normalize("  Hello,   WORLD!! ") == "hello world");
  CHECK(normalize("it's a dog.") == "its a dog");
  CHECK(normalize("a - b") == "a b");
  CHECK(normalize_tokens("\t\n").empty());
}

TEST_CASE("f1 examples") {
  CHECK(f1("a b c", "a b c") == 1.0);
  CHECK(f1("a b", "c d") == 0.0);
  CHECK(f1("a b c", "a b d") == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(f1("", "a") == 0.0);
  CHECK(f1("A, b!", "a b") == 1.0);
  CHECK(f1("a a a", "a") == doctest::Approx(0.5));
}

TEST_CASE("bleu4 examples") {
  CHECK(bleu4("the cat sat on the mat", "the cat sat on the mat") == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(bleu4("a b c d", "e f g h") < 1e-8);
  CHECK(bleu4("a b c d", "a b c e") < 1e-2);
  CHECK(bleu4("", "a b") == 0.0);
  // Brevity penalty: hypothesis a strict prefix of the reference.
  const double v = bleu4("a b c d e", "a b c d e f g h i j");
  CHECK(v == doctest::Approx(std::exp(1.0 - 10.0 / 5.0)).epsilon(1e-12));
}

TEST_CASE("rouge_l examples") {
  CHECK(rouge_l("a b c", "a b c") == doctest::Approx(1.0));
  CHECK(rouge_l("a b", "c d") == 0.0);
  CHECK(lcs_length({"a", "b", "c", "d"}, {"b", "d"}) == 2);
}

TEST_CASE("metrics agree with naive oracles on random cases") {
  num::SplitMix64 rng(99);
  for (int i = 0; i < 300; ++i) {
    const auto h = random_sentence(rng, 9), r = random_sentence(rng, 9);
    CHECK(std::abs(f1(h, r) - naive_f1(h, r)) <= 1e-9);
    CHECK(std::abs(bleu4(h, r) - naive_bleu(h, r)) <= 1e-9);
    CHECK(std::abs(rouge_l(h, r) - naive_rouge(h, r)) <= 1e-9);
    CHECK(lcs_length(split_ws(h), split_ws(r)) == brute_lcs(split_ws(h), split_ws(r)));
    for (double v : {f1(h, r), bleu4(h, r), rouge_l(h, r)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("perplexity: uniform model and f64 recomputation") {
  CHECK_THROWS(perplexity_from_log_probs({}));
  CHECK(perplexity_from_log_probs({std::log(0.25), std::log(0.25)}) == doctest::Approx(4.0));

  auto cfg = tiny(16);
  auto params = model::init_params<float>(cfg, 1);
  for (auto& v : params.token_emb.mutable_data()) v = 0.0f;
  const std::vector<text::Batch> batches = {id_batch(16, 2), id_batch(16, 3)};
  const auto p = train::perplexity(params, cfg, batches);
  CHECK(p.tokens > 0);
  CHECK(std::abs(p.value() - 16.0) <= 1e-3);

  // Random model: recompute from per-token log-probs in f64.
  auto cfg2 = tiny(30);
  auto rp = model::init_params<float>(cfg2, 7);
  const std::vector<text::Batch> b2 = {id_batch(30, 4), id_batch(30, 5)};
  const auto got = train::perplexity(rp, cfg2, b2);
  std::vector<double> lps;
  for (const auto& b : b2) {
    num::NoGradGuard ng;
    auto mem = model::encode(rp, cfg2, b);
    const std::size_t len = b.tgt_len - 1;
    std::vector<int> inputs;
    for (std::size_t r = 0; r < b.batch; ++r)
      for (std::size_t t = 0; t < len; ++t) inputs.push_back(b.target(r, t));
    auto logits = model::decode_logits(rp, cfg2, mem, inputs, len);
    for (std::size_t r = 0; r < b.batch; ++r)
      for (std::size_t t = 0; t < len; ++t) {
        if (!b.target_mask[r * b.tgt_len + t + 1]) continue;
        const std::size_t row = r * len + t;
        long double z = 0, mx = -1e30L;
        for (std::size_t v = 0; v < cfg2.vocab_size; ++v) mx = std::max<long double>(mx, logits.at(row, v));
        for (std::size_t v = 0; v < cfg2.vocab_size; ++v) z += std::exp(static_cast<long double>(logits.at(row, v)) - mx);
        lps.push_back(static_cast<double>(logits.at(row, b.target(r, t + 1)) - mx - std::log(z)));
      }
  }
  CHECK(lps.size() == got.tokens);
  CHECK(std::abs(perplexity_from_log_probs(lps) - got.value()) / got.value() <= 1e-5);
}

TEST_CASE("report averages and table shape") {
  EvalReport r;
  r.keys = {{"fusion", "early"}};
  r.rows = {{"convai2", true, 10.0}, {"wow", true, 20.0}, {"image_chat", false, 30.0}};
  DatasetScores ft;
  ft.dataset = "image_chat_first_turn";
  ft.ppl = 40.0;
  r.ic_first_turn = ft;
  CHECK(*r.text_only_avg_ppl() == doctest::Approx(15.0));
  CHECK(*r.all_avg_ppl() == doctest::Approx(20.0));

  EvalReport failed;
  failed.keys = {{"fusion", "late"}};
  failed.failure = "boom";
  const auto tsv = ablation_tsv({r, failed});
  CHECK(tsv.rfind("fusion\tconvai2\twow\timage_chat\tText avg\tIC first turn\tAll avg\tstatus\n", 0) == 0);
  CHECK(tsv.find("early\t10.00\t20.00\t30.00\t15.00\t40.00\t20.00\tok\n") != std::string::npos);
  CHECK(tsv.find("late\t-\t-\t-\t-\t-\t-\tFAILED: boom\n") != std::string::npos);
  CHECK(metrics_tsv(r).find("image_chat_first_turn\t40.0000") != std::string::npos);
}

TEST_CASE("ablation harness: grid, ordering, failure marker") {
  auto grid = ablation_grid({{"features", {"global", "region"}}, {"fusion", {"none", "early", "late"}}});
  REQUIRE(grid.size() == 6);
  CHECK(grid[1].value("features") == "global");
  CHECK(grid[1].value("fusion") == "early");
  CHECK_THROWS(grid[0].value("data"));

  auto runner = [](const AblationCell& c) {
    if (c.value("fusion") == "late" && c.value("features") == "region") throw std::runtime_error("cell exploded");
    EvalReport r;
    r.rows = {{"coco", false, c.value("fusion") == "none" ? 9.0 : 3.0}};
    return r;
  };
  for (std::size_t threads : {1, 4}) {
    auto reports = run_ablation(grid, runner, threads);
    REQUIRE(reports.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(reports[i].keys == grid[i].keys);
    CHECK(reports[5].failure.has_value());
    CHECK(reports[5].failure->find("exploded") != std::string::npos);
    CHECK_FALSE(reports[4].failure.has_value());
    CHECK(reports[0].rows[0].ppl == 9.0);
  }
  auto single = run_ablation(ablation_grid({{"fusion", {"early"}}}), runner);
  CHECK(single.size() == 1);
  const auto one = ablation_tsv(single);
  CHECK(std::count(one.begin(), one.end(), '\n') == 2);
}
