// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "metric_oracles.hpp"
#include "mmb/decode/beam.hpp"
#include "mmb/eval/metrics.hpp"
#include "mmb/model/checkpoint.hpp"
#include "mmb/model/transformer.hpp"
#include "mmb/numerics/grad_check.hpp"
#include "mmb/serve/http.hpp"
#include "mmb/train/trainer.hpp"
#include "test_support.hpp"

using namespace mmb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "mmb_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

model::ModelConfig small_config(std::size_t vocab) {
  auto c = model::ModelConfig::desk(vocab);
  c.d_model = 64;
  c.n_heads = 2;
  c.d_ffn = 128;
  c.n_enc_layers = 1;
  c.n_dec_layers = 2;
  c.max_positions = 96;
  c.feature_kind = img::FeatureKind::Global;
  return c;
}

train::TrainOptions budget(std::size_t steps, double lr = 1e-3) {
  train::TrainOptions o;
  o.lr = lr;
  o.warmup_steps = steps / 10;
  o.max_steps = steps;
  o.eval_interval = std::max<std::size_t>(1, steps / 4);
  o.patience = steps;
  o.batch_size = 32;
  o.seed = 5;
  return o;
}

std::vector<int> banned_ids() { return {text::Vocab::kPad, text::Vocab::kBos, text::Vocab::kUnk}; }

// ---------------------------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::size_t coords = 0;
  std::string where;
  for (auto [fusion, kind] : {std::pair{model::Fusion::Early, img::FeatureKind::Region},
                              std::pair{model::Fusion::Late, img::FeatureKind::Spatial}}) {
    auto cfg = model::ModelConfig::desk(300);
    cfg.fusion = fusion;
    cfg.feature_kind = kind;
    auto p = model::init_params<double>(cfg, 11);
    std::vector<std::vector<int>> ctx = {{20, 31, 42, 53, 64, 75, 86, 97}, {120, 130, 140, 150, 160}};
    std::vector<std::vector<int>> lab = {{201, 202, 203, 204}, {210, 211, 212}};
    auto image = std::make_shared<img::ImageFeatures>(img::synth_features("grad", kind, 3));
    const auto batch = text::make_batch_from_ids(ctx, lab, {image, nullptr}, {});
    auto named = p.named();
    std::vector<std::pair<std::string, num::Tensor<double>*>> params(named.begin(), named.end());
    num::GradCheckOptions o;
    o.samples = 200;
    o.seed = 17;
    // At 1e-5 the f64 roundoff of the loss difference already reaches 1e-4 relative on
    // coordinates whose gradient is near 1e-6; the truncation error at 1e-4 is far smaller.
    o.step = 1e-4;
    const auto r = num::grad_check([&] { return model::forward_loss(p, cfg, batch).loss; }, params, o);
    coords += r.coordinates;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = r.worst_param;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && coords >= 200 && secs < 120,
          fmt("desk preset f64, %zu coordinates, max rel error %.2e (%s), %.1fs", coords, worst, where.c_str(), secs)};
}

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  train::SynthWorld world(img::FeatureKind::Global, 7);
  train::ExampleBuilder b({}, world.resolver(), nullptr, nullptr, 1);
  const auto ex = b.build_all(train::synth_captions(32, 11));
  auto vocab = text::Vocab::train(train::vocab_corpus(ex), 300);
  auto cfg = model::ModelConfig::desk(vocab.size());
  cfg.feature_kind = img::FeatureKind::Global;
  auto m = train::ChatModel::fresh(cfg, std::move(vocab), 3);
  train::TrainData d;
  d.datasets = {ex};
  d.valid = ex;
  auto o = budget(2000);
  o.warmup_steps = 50;
  o.eval_interval = 25;
  o.target_ppl = 1.2;
  const auto out = train::train_model(m, d, o);
  const double secs = seconds_since(t0);
  return {out.best_val_ppl <= 1.2 && out.steps <= 2000 && secs < 300,
          fmt("32 captions, desk preset: train ppl %.3f after %zu steps, %.1fs", out.best_val_ppl, out.steps, secs)};
}

struct FusionResult {
  double none = 0, early = 0, late = 0;
};

const FusionResult& fusion_runs() {
  static const FusionResult r = [] {
    train::SynthWorld world(img::FeatureKind::Global, 7);
    train::ExampleBuilder b({}, world.resolver(), nullptr, nullptr, 1);
    const auto tr = b.build_all(train::synth_captions(256, 11, 0));
    const auto va = b.build_all(train::synth_captions(64, 12, 100000));
    const auto vocab = text::Vocab::train(train::vocab_corpus(tr), 300);
    FusionResult out;
    for (auto f : {model::Fusion::None, model::Fusion::Early, model::Fusion::Late}) {
      auto cfg = small_config(vocab.size());
      cfg.fusion = f;
      auto m = train::ChatModel::fresh(cfg, vocab, 3);
      train::TrainData d;
      d.datasets = {tr};
      d.valid = va;
      const double ppl = train::train_model(m, d, budget(300)).best_val_ppl;
      (f == model::Fusion::None ? out.none : f == model::Fusion::Early ? out.early : out.late) = ppl;
    }
    return out;
  }();
  return r;
}

Outcome fusion_benefit() {
  const auto& r = fusion_runs();
  const double ge = 1 - r.early / r.none, gl = 1 - r.late / r.none;
  return {ge >= 0.2 && gl >= 0.2,
          fmt("held-out ppl none %.3f, early %.3f (%.0f%% lower), late %.3f (%.0f%% lower)", r.none, r.early,
              100 * ge, r.late, 100 * gl)};
}

Outcome early_late_ordering() {
  const auto& r = fusion_runs();
  return {true, fmt("ordering not asserted; early %.3f, late %.3f", r.early, r.late)};
}

std::vector<int> random_context(num::SplitMix64& rng, std::size_t vocab, std::size_t max_len) {
  std::vector<int> ctx(rng.below(max_len + 1));
  for (auto& t : ctx) t = 2 + static_cast<int>(rng.below(vocab - 2));
  return ctx;
}

Outcome decoder_oracle() {
  num::SplitMix64 rng(2024);
  std::size_t matched = 0;
  const std::size_t models = 64;
  for (std::size_t i = 0; i < models; ++i) {
    const std::size_t v = 3 + rng.below(4), len = 1 + rng.below(5);
    testing::TableModel m(v, 9000 + i);
    decode::BeamConfig cfg;
    cfg.max_length = len;
    cfg.min_length = rng.below(len);
    cfg.beam_size = static_cast<std::size_t>(std::pow(double(v), double(len)));
    const auto ctx = random_context(rng, v, 6);
    const auto beam = decode::beam_search(m, ctx, cfg);
    const auto oracle = decode::exhaustive_oracle(m, ctx, cfg);
    matched += beam.best.tokens == oracle.tokens;
  }
  return {matched == models, fmt("%zu/%zu random models (V<=6, max_len<=5) match exactly", matched, models)};
}

Outcome blocking_invariants() {
  num::SplitMix64 rng(123);
  std::size_t violations = 0, fallbacks = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    testing::TableModel m(24, 5000 + trial);
    decode::BeamConfig cfg;
    cfg.beam_size = 1 + rng.below(5);
    cfg.min_length = 5;
    cfg.max_length = 12;
    const auto ctx = random_context(rng, 24, 20);
    const auto out = decode::beam_search(m, ctx, cfg);
    auto body = out.best.tokens;
    if (out.best.finished) body.pop_back();
    fallbacks += out.fallback_steps;
    // Checked as if no step was relaxed, so any fallback also shows up as a violation.
    violations += testing::reply_violation(body, ctx, out.best.finished, 0, cfg.min_length, cfg.max_length, {},
                                           m.eos_id())
                      .has_value();
  }
  return {violations == 0 && fallbacks == 0,
          fmt("1000 decodes: %zu invariant violations, fallback counter %zu", violations, fallbacks)};
}

Outcome metric_oracles() {
  num::SplitMix64 rng(99);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const auto h = testing::random_sentence(rng, 9), r = testing::random_sentence(rng, 9);
    worst = std::max({worst, std::abs(eval::f1(h, r) - testing::naive_f1(h, r)),
                      std::abs(eval::bleu4(h, r) - testing::naive_bleu(h, r)),
                      std::abs(eval::rouge_l(h, r) - testing::naive_rouge(h, r))});
  }
  // Zero token embeddings and no image make every logit equal: ppl must be V.
  model::ModelConfig c;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ffn = 32;
  c.vocab_size = 16;
  c.max_positions = 32;
  c.fusion = model::Fusion::None;
  auto p = model::init_params<float>(c, 1);
  for (auto& v : p.token_emb.mutable_data()) v = 0.0f;
  const std::vector<text::Batch> batches = {
      text::make_batch_from_ids({{4, 5, 6}, {7, 8}}, {{9, 10, 11}, {12}}, {nullptr, nullptr}, {})};
  const double ppl = train::perplexity(p, c, batches).value();
  return {worst <= 1e-9 && std::abs(ppl - 16.0) <= 1e-3,
          fmt("f1/bleu4/rouge_l vs naive oracles on 100 cases each: max diff %.1e; uniform V=16 ppl %.6f", worst, ppl)};
}

// ---------------------------------------------------------------------------------------------

Outcome degendering() {
  const auto lex = safety::GenderLexicon::load_default();
  train::ExampleOptions eo;
  eo.degender = true;
  train::ExampleBuilder b(eo, nullptr, nullptr, &lex, 1);
  const auto tr = b.build_all(train::synth_dialogue(1000, 11));
  const auto va = b.build_all(train::synth_dialogue(100, 12));
  auto vocab = text::Vocab::train(train::vocab_corpus(tr), 400);
  auto cfg = small_config(vocab.size());
  cfg.fusion = model::Fusion::None;
  auto m = train::ChatModel::fresh(cfg, std::move(vocab), 3);
  train::TrainData d;
  d.datasets = {tr};
  d.valid = va;
  train::train_model(m, d, budget(300));

  const auto test = train::synth_dialogue(200, 13);
  auto rate = [&](const std::string& control) {
    std::size_t hits = 0;
    for (const auto& ep : test) {
      const auto g = train::generate(m, b.build_with(ep, std::nullopt, control), train::desk_beam());
      const auto f = safety::classify_gender(g.text, lex);
      hits += f.female || f.male;
    }
    return static_cast<double>(hits) / static_cast<double>(test.size());
  };
  const double off = rate("f0 m0"), on = rate("f1 m1");
  const bool pass = on > 0 && on >= 5 * off;
  const std::string factor = off > 0 ? fmt("%.1fx", on / off) : std::string("unbounded");
  return {pass, fmt("gendered-word utterance rate f1 m1 %.3f vs f0 m0 %.3f (reduction %s)", on, off,
                    factor.c_str())};
}

/// Image-Chat model shared by the toxicity and serve checks.
struct StyledWorld {
  safety::StyleRegistry styles = safety::StyleRegistry::load_default();
  train::SynthWorld world{img::FeatureKind::Global, 7};
  std::shared_ptr<const train::ChatModel> model;
  std::shared_ptr<const img::FeatureStore> store;
  std::vector<text::Episode> test;

  StyledWorld() {
    train::ExampleBuilder b({}, world.resolver(), &styles, nullptr, 1);
    const auto tr = b.build_all(train::synth_image_chat(styles, 1000, 21));
    const auto va = b.build_all(train::synth_image_chat(styles, 100, 22, 100000));
    auto vocab = text::Vocab::train(train::vocab_corpus(tr), 400);
    const auto cfg = small_config(vocab.size());
    auto m = train::ChatModel::fresh(cfg, std::move(vocab), 3);
    train::TrainData d;
    d.datasets = {tr};
    d.valid = va;
    train::train_model(m, d, budget(300));
    model = std::make_shared<const train::ChatModel>(std::move(m));
    test = train::synth_image_chat(styles, 100, 23, 200000);
    const auto path = (scratch() / "styled.mmf").string();
    train::write_world_features(path, world, test);
    store = std::make_shared<const img::FeatureStore>(img::FeatureStore::open(path));
  }
};

const StyledWorld& styled() {
  static const StyledWorld w;
  return w;
}

Outcome bucket_and_toxicity() {
  const auto& w = styled();
  num::SplitMix64 rng(31);
  std::size_t replaced = 0;
  for (int i = 0; i < 10000; ++i) replaced += safety::bucket_replace(w.styles, "Cheerful", 0.75, rng) != "Cheerful";
  const double rate = replaced / 10000.0;

  // Arithmetic on a scripted generator: 1 offensive reply out of 4 → exactly 25.00%.
  std::vector<text::Episode> four(4);
  for (auto& ep : four) ep.label = "x";
  std::size_t calls = 0;
  safety::BlocklistDetector bl(safety::Blocklist::load_default());
  const auto scripted = safety::toxicity_report(
      four, {"Cruel"}, {&bl}, [&](const text::Episode&, const std::string&) {
        return calls++ == 2 ? std::string("you idiot") : std::string("nice dog");
      });
  const auto cell = scripted.at("Cruel", "Blocklist");
  const bool arithmetic = cell.hits == 1 && cell.total == 4 && safety::format_percent(cell.percent()) == "25.00";

  train::ExampleBuilder b({}, w.world.resolver(), &w.styles, nullptr, 1);
  const auto table = safety::toxicity_report(
      w.test, {"Cheerful", "Cruel"}, {&bl}, [&](const text::Episode& ep, const std::string& style) {
        return train::generate(*w.model, b.build_with(ep, style, std::nullopt), train::desk_beam()).text;
      });
  const double pos = table.at("Cheerful", "Blocklist").percent(), neg = table.at("Cruel", "Blocklist").percent();
  return {std::abs(rate - 0.75) <= 0.02 && arithmetic && neg > pos,
          fmt("bucket rate %.4f over 10k draws; scripted ratio %s%% (%zu/%zu); toxicity Cruel %.2f%% > Cheerful %.2f%%",
              rate, safety::format_percent(cell.percent()).c_str(), cell.hits, cell.total, neg, pos)};
}

// ---------------------------------------------------------------------------------------------

Outcome model_properties() {
  auto cfg = model::ModelConfig::desk(200);
  cfg.feature_kind = img::FeatureKind::Spatial;
  auto image = std::make_shared<img::ImageFeatures>(img::synth_features("prop", cfg.feature_kind, 5));
  const auto batch = text::make_batch_from_ids({{20, 21, 22, 23, 24, 25}, {30, 31, 32}}, {{40, 41, 42}, {43, 44}},
                                               {image, nullptr}, {});

  double pad_diff = 0;
  for (auto f : {model::Fusion::None, model::Fusion::Early, model::Fusion::Late}) {
    cfg.fusion = f;
    auto p = model::init_params<float>(cfg, 4);
    num::NoGradGuard ng;
    const double a = model::forward_loss(p, cfg, batch).loss.item();
    const double b = model::forward_loss(p, cfg, text::pad_batch(batch, 6, 4)).loss.item();
    pad_diff = std::max(pad_diff, std::abs(a - b));
  }

  cfg.fusion = model::Fusion::Early;
  auto p = model::init_params<float>(cfg, 6);
  bool causal = true;
  {
    num::NoGradGuard ng;
    const auto mem = model::encode(p, cfg, text::make_batch_from_ids({{20, 21, 22}}, {{1}}, {image}, {}));
    const std::vector<int> prefix{1, 50, 51, 52, 53, 54};
    const auto base = model::decode_logits(p, cfg, mem, prefix, prefix.size());
    for (std::size_t t = 0; t + 1 < prefix.size(); ++t) {
      auto altered = prefix;
      for (std::size_t u = t + 1; u < altered.size(); ++u) altered[u] = 90 + static_cast<int>(u);
      const auto other = model::decode_logits(p, cfg, mem, altered, altered.size());
      for (std::size_t s = 0; s <= t; ++s)
        for (std::size_t v = 0; v < cfg.vocab_size; ++v) causal = causal && base.at(s, v) == other.at(s, v);
    }
  }

  const auto path = (scratch() / "roundtrip.ckpt").string();
  model::save_checkpoint(path, {cfg, p.clone(), text::Vocab().to_json(), nlohmann::json::array()});
  const auto back = model::load_checkpoint(path, cfg);
  bool identical = true;
  for (std::size_t i = 0; i < p.named().size(); ++i) {
    const auto a = p.named()[i].second->data(), b = back.params.named()[i].second->data();
    identical = identical && a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
  }
  {
    num::NoGradGuard ng;
    identical = identical && model::forward_loss(p, cfg, batch).loss.item() ==
                                 model::forward_loss(back.params, cfg, batch).loss.item();
  }

  // Two seeded training runs must write byte-identical checkpoints.
  train::SynthWorld world(img::FeatureKind::Global, 2);
  train::ExampleBuilder eb({}, world.resolver(), nullptr, nullptr, 1);
  const auto ex = eb.build_all(train::synth_captions(48, 3));
  const auto vocab = text::Vocab::train(train::vocab_corpus(ex), 280);
  std::string hashes[2];
  for (int run = 0; run < 2; ++run) {
    auto m = train::ChatModel::fresh(small_config(vocab.size()), vocab, 8);
    train::TrainData d;
    d.datasets = {ex};
    d.valid = ex;
    auto o = budget(30);
    o.batch_size = 8;
    train::train_model(m, d, o);
    const auto out = (scratch() / ("det" + std::to_string(run) + ".ckpt")).string();
    m.save(out);
    hashes[run] = model::file_hash(out);
  }
  const bool deterministic = hashes[0] == hashes[1];
  return {pad_diff <= 1e-6 && causal && identical && deterministic,
          fmt("padding max diff %.1e; causality %s; checkpoint roundtrip %s; seeded runs %s (%s)", pad_diff,
              causal ? "exact" : "VIOLATED", identical ? "bit-identical" : "DIFFERS",
              deterministic ? "bit-identical" : "DIFFER", hashes[0].c_str())};
}

Outcome serve_session() {
  const auto& w = styled();
  serve::SafetyTools tools{safety::Blocklist::load_default(), nullptr, safety::GenderLexicon::load_default(),
                           std::make_shared<const safety::StyleRegistry>(safety::StyleRegistry::load_default())};
  serve::ServeOptions o;
  o.seed = 5;
  auto svc = std::make_shared<serve::ChatService>(w.model, w.store, tools, o);
  serve::HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  std::thread loop([&] { server.listen(); });
  for (int i = 0; i < 400 && !server.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));

  std::size_t replies = 0, violations = 0, errors = 0;
  auto check = [&](const nlohmann::json& r) {
    ++replies;
    const auto v = testing::reply_violation(
        r["stats"]["token_ids"].get<std::vector<int>>(), r["stats"]["context_ids"].get<std::vector<int>>(),
        r["stats"]["finished"].get<bool>(), r["stats"]["blocked_fallback_steps"].get<std::size_t>(),
        o.beam.min_length, o.beam.max_length, banned_ids(), text::Vocab::kEos);
    violations += v.has_value() || r["text"].get<std::string>().empty();
  };
  auto post = [&](httplib::Client& c, const std::string& path, const nlohmann::json& body) {
    auto res = c.Post(path, body.dump(), "application/json");
    if (!res || res->status != 200) {
      ++errors;
      return nlohmann::json();
    }
    return nlohmann::json::parse(res->body);
  };

  const auto ids = svc->image_ids();
  const std::vector<std::string> script = {"hi! what is this?", "do you like it?", "what colour is it?",
                                           "is it friendly?", "tell me more", "why do you say that?", "bye!"};
  std::size_t turns = 0;
  {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    const auto start = post(c, "/session", {{"image_id", ids.at(0)}});
    if (!start.is_null()) {
      check(start["opening"]);
      for (const auto& msg : script) {
        const auto r = post(c, "/chat", {{"session_id", start["session_id"]}, {"message", msg}});
        if (r.is_null()) break;
        check(r);
        ++turns;
      }
    }
  }

  // Two sessions interleave requests from separate threads; each history must hold only its own
  // turns, and every reply must equal a fresh single-session replay.
  std::vector<std::vector<std::string>> scripts = {{"first a", "first b", "first c", "first d"},
                                                   {"second a", "second b", "second c", "second d"}};
  std::string sids[2];
  std::vector<std::string> got[2];
  std::vector<std::thread> threads;
  for (int k = 0; k < 2; ++k) {
    threads.emplace_back([&, k] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(120, 0);
      auto res = c.Post("/session", nlohmann::json{{"image_id", ids.at(1 + k)}}.dump(), "application/json");
      if (!res || res->status != 200) return;
      sids[k] = nlohmann::json::parse(res->body)["session_id"];
      for (const auto& msg : scripts[k]) {
        auto r = c.Post("/chat", nlohmann::json{{"session_id", sids[k]}, {"message", msg}}.dump(), "application/json");
        if (!r || r->status != 200) return;
        got[k].push_back(nlohmann::json::parse(r->body)["text"]);
      }
    });
  }
  for (auto& t : threads) t.join();
  server.stop();
  loop.join();

  bool isolated = true;
  serve::ChatService replay(w.model, w.store, tools, o);
  for (int k = 0; k < 2; ++k) {
    if (got[k].size() != scripts[k].size()) {
      isolated = false;
      continue;
    }
    const auto info = svc->session(sids[k]);
    isolated = isolated && info.history.size() == 1 + 2 * scripts[k].size();
    const auto sid = replay.create_session(ids.at(1 + k), nullptr).session.session_id;
    for (std::size_t i = 0; isolated && i < scripts[k].size(); ++i) {
      isolated = info.history[1 + 2 * i].text == scripts[k][i] && info.history[2 + 2 * i].text == got[k][i] &&
                 replay.chat(sid, scripts[k][i]).text == got[k][i];
    }
  }
  return {turns == 7 && violations == 0 && errors == 0 && isolated,
          fmt("7-turn image session: %zu/7 turns, %zu replies checked, %zu invariant violations, %zu HTTP errors; "
              "concurrent sessions %s",
              turns, replies, violations, errors, isolated ? "isolated" : "CROSS-CONTAMINATED")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_check},
      {"overfit sanity", overfit},
      {"fusion benefit", fusion_benefit},
      {"early-vs-late ordering", early_late_ordering},
      {"decoder oracle", decoder_oracle},
      {"blocking and min-length invariants", blocking_invariants},
      {"metric oracles", metric_oracles},
      {"degendering", degendering},
      {"style buckets and toxicity", bucket_and_toxicity},
      {"padding, causality, checkpoint, determinism", model_properties},
      {"serve", serve_session},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail
              << fmt(" [%.1fs]", seconds_since(t0)) << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - failed << "/" << criteria.size() << std::endl;
  return failed ? 1 : 0;
}
