#include "mmb/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "mmb/numerics/adam.hpp"
#include "mmb/textdata/sampler.hpp"

namespace mmb::train {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrainError("cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  return hex64(num::fnv1a64(bytes));
}

nlohmann::json record_json(const LogRecord& r) {
  nlohmann::json j = {{"step", r.step}, {"loss", r.loss}, {"lr", r.lr}};
  if (r.val_ppl) j["val_ppl"] = *r.val_ppl;
  return j;
}

}  // namespace

TrainOutcome train_model(ChatModel& m, const TrainData& data, const TrainOptions& o) {
  if (data.datasets.empty()) throw TrainError("no training datasets");
  if (o.batch_size == 0 || o.eval_interval == 0) throw TrainError("batch_size and eval_interval must be positive");
  std::vector<text::DatasetSpec> specs;
  for (std::size_t i = 0; i < data.datasets.size(); ++i) {
    if (data.datasets[i].empty()) throw TrainError("training dataset " + std::to_string(i) + " is empty");
    const double w = data.weights.empty() ? static_cast<double>(data.datasets[i].size()) : data.weights.at(i);
    specs.push_back({i < data.names.size() ? data.names[i] : "data" + std::to_string(i), data.datasets[i].size(), w});
  }
  text::MultitaskSampler sampler(specs, num::mix_seed(o.seed, 1));

  std::vector<text::Example> valid = data.valid;
  if (valid.empty())
    for (const auto& d : data.datasets) valid.insert(valid.end(), d.begin(), d.end());
  const auto valid_batches = make_batches(valid, m.vocab, fit_limits(m.config, o.limits), 32);

  auto named = m.params.named();
  std::vector<std::string> names;
  std::vector<std::size_t> sizes;
  std::vector<num::Tensor<float>*> ptrs;
  for (auto& [name, t] : named) {
    names.push_back(name);
    sizes.push_back(t->numel());
    ptrs.push_back(t);
  }
  num::AdamOptions adam_opts;
  adam_opts.lr = o.lr;
  adam_opts.warmup_steps = o.warmup_steps;
  num::Adam adam(adam_opts, names, sizes);

  std::ofstream log;
  if (!o.log_path.empty()) {
    log.open(o.log_path, std::ios::trunc);
    if (!log) throw TrainError("cannot write log " + o.log_path);
  }

  TrainOutcome out;
  out.initial_val_ppl = perplexity(m.params, m.config, valid_batches).value();
  out.best_val_ppl = std::numeric_limits<double>::infinity();
  auto best = m.params.clone();
  bool have_best = false;
  std::size_t bad_evals = 0;

  auto save_best = [&] {
    if (o.checkpoint_path.empty() || !have_best) return;
    ChatModel snapshot{m.config, best, m.vocab, m.provenance};
    snapshot.save(o.checkpoint_path);
  };

  for (std::size_t step = 1; step <= o.max_steps; ++step) {
    std::vector<text::Example> examples;
    examples.reserve(o.batch_size);
    for (std::size_t i = 0; i < o.batch_size; ++i) {
      const auto d = sampler.next();
      examples.push_back(data.datasets[d.dataset][d.index]);
    }
    const auto batch = text::make_batch(examples, m.vocab, fit_limits(m.config, o.limits));

    LogRecord rec;
    rec.step = step;
    rec.lr = adam.effective_lr(step);
    try {
      model::ForwardOptions fo;
      fo.train = true;
      fo.seed = num::mix_seed(o.seed, step);
      auto loss = model::forward_loss(m.params, m.config, batch, fo);
      rec.loss = static_cast<double>(loss.loss.item());
      if (!std::isfinite(rec.loss)) throw num::NumericError("loss is not finite at step " + std::to_string(step));
      num::backward(loss.loss);
      adam.step(ptrs);
    } catch (const num::NumericError& e) {
      m.params.zero_grad();
      if (have_best) m.params = best;
      save_best();
      std::string msg = std::string("training diverged: ") + e.what();
      if (have_best && !o.checkpoint_path.empty()) msg += " (last good checkpoint: " + o.checkpoint_path + ")";
      throw TrainingDiverged(msg);
    }
    m.params.zero_grad();
    out.steps = step;

    if (step % o.eval_interval == 0 || step == o.max_steps) {
      const double ppl = perplexity(m.params, m.config, valid_batches).value();
      rec.val_ppl = ppl;
      ++out.evals;
      if (ppl < out.best_val_ppl) {
        out.best_val_ppl = ppl;
        out.best_step = step;
        best = m.params.clone();
        have_best = true;
        bad_evals = 0;
        save_best();
      } else {
        ++bad_evals;
      }
      if (o.target_ppl > 0 && ppl <= o.target_ppl) out.reached_target = true;
      if (bad_evals >= o.patience) out.early_stopped = true;
    }
    if (log.is_open()) log << record_json(rec).dump() << '\n';
    out.log.push_back(rec);
    if (out.reached_target || out.early_stopped) break;
  }
  if (have_best) m.params = best;
  else out.best_val_ppl = out.initial_val_ppl;
  return out;
}

std::string_view stage_name(Stage s) { return s == Stage::AdaptPretrain ? "adapt_pretrain" : "finetune"; }

Stage parse_stage(std::string_view name) {
  if (name == "adapt_pretrain" || name == "adapt-pretrain") return Stage::AdaptPretrain;
  if (name == "finetune") return Stage::Finetune;
  throw TrainError("unknown stage '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!seed) throw TrainError("train config: seed is required");
  if (datasets.empty()) throw TrainError("train config: no datasets");
  if (lr < 0 || !std::isfinite(lr)) throw TrainError("train config: bad lr");
  if (batch_size == 0 || eval_interval == 0) throw TrainError("train config: batch_size and eval_interval must be positive");
  if (valid_fraction < 0 || valid_fraction >= 1) throw TrainError("train config: valid_fraction must be in [0, 1)");
  if (controls.bucket_p < 0 || controls.bucket_p > 1) throw TrainError("train config: bucket_p must be in [0, 1]");
  if (output.empty()) throw TrainError("train config: output path is required");
}

nlohmann::json TrainConfig::to_json() const {
  auto refs = [](const std::vector<DatasetRef>& v) {
    auto a = nlohmann::json::array();
    for (const auto& d : v) a.push_back({{"path", d.path}, {"weight", d.weight}});
    return a;
  };
  nlohmann::json j = {
      {"stage", stage_name(stage)},
      {"datasets", refs(datasets)},
      {"valid", refs(valid)},
      {"valid_fraction", valid_fraction},
      {"features", features},
      {"vocab", vocab},
      {"vocab_size", vocab_size},
      {"model", model},
      {"lr", lr},
      {"warmup_steps", warmup_steps},
      {"max_steps", max_steps},
      {"eval_interval", eval_interval},
      {"patience", patience},
      {"batch_size", batch_size},
      {"init_checkpoint", init_checkpoint},
      {"output", output},
      {"log", log},
      {"controls",
       {{"include_knowledge", controls.include_knowledge},
        {"degender", controls.degender},
        {"bucket_p", controls.bucket_p},
        {"no_image", controls.no_image}}},
      {"limits", {{"max_context", limits.max_context}, {"max_label", limits.max_label}}},
      {"target_ppl", target_ppl},
  };
  j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    auto refs = [](const nlohmann::json& a) {
      std::vector<DatasetRef> out;
      for (const auto& d : a) {
        if (d.is_string()) out.push_back({d.get<std::string>(), 0.0});
        else out.push_back({d.at("path").get<std::string>(), d.value("weight", 0.0)});
      }
      return out;
    };
    if (j.contains("stage")) c.stage = parse_stage(j["stage"].get<std::string>());
    if (j.contains("datasets")) c.datasets = refs(j["datasets"]);
    if (j.contains("valid")) c.valid = refs(j["valid"]);
    c.valid_fraction = j.value("valid_fraction", c.valid_fraction);
    c.features = j.value("features", c.features);
    c.vocab = j.value("vocab", c.vocab);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    if (j.contains("model")) c.model = j["model"];
    c.lr = j.value("lr", c.lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.patience = j.value("patience", c.patience);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
    c.init_checkpoint = j.value("init_checkpoint", c.init_checkpoint);
    c.output = j.value("output", c.output);
    c.log = j.value("log", c.log);
    if (j.contains("controls")) {
      const auto& k = j["controls"];
      c.controls.include_knowledge = k.value("include_knowledge", c.controls.include_knowledge);
      c.controls.degender = k.value("degender", c.controls.degender);
      c.controls.bucket_p = k.value("bucket_p", c.controls.bucket_p);
      c.controls.no_image = k.value("no_image", c.controls.no_image);
    }
    if (j.contains("limits")) {
      c.limits.max_context = j["limits"].value("max_context", c.limits.max_context);
      c.limits.max_label = j["limits"].value("max_label", c.limits.max_label);
    }
    c.target_ppl = j.value("target_ppl", c.target_ppl);
  } catch (const nlohmann::json::exception& e) {
    throw TrainError(std::string("train config: ") + e.what());
  }
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TrainError("cannot read config " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw TrainError(path + ": " + e.what());
  }
}

model::ModelConfig model_config_from(const nlohmann::json& spec, std::size_t vocab_size) {
  const std::string preset = spec.value("preset", "desk");
  model::ModelConfig base;
  if (preset == "desk") base = model::ModelConfig::desk(vocab_size);
  else if (preset == "reference") base = model::ModelConfig::reference(vocab_size);
  else throw model::ConfigError("unknown model preset '" + preset + "'");
  auto j = model::to_json(base);
  for (auto it = spec.begin(); it != spec.end(); ++it)
    if (it.key() != "preset") j[it.key()] = it.value();
  j["vocab_size"] = vocab_size;
  return model::config_from_json(j);
}

RunResult run_training(const TrainConfig& cfg) {
  cfg.validate();
  const std::uint64_t seed = *cfg.seed;

  ImageResolver images;
  if (!cfg.features.empty()) images = store_resolver(std::make_shared<const img::FeatureStore>(img::FeatureStore::open(cfg.features)));
  std::optional<safety::StyleRegistry> styles;
  std::optional<safety::GenderLexicon> lexicon;
  if (cfg.controls.bucket_p > 0) styles = safety::StyleRegistry::load_default();
  if (cfg.controls.degender) lexicon = safety::GenderLexicon::load_default();
  ExampleBuilder builder(cfg.controls, images, styles ? &*styles : nullptr, lexicon ? &*lexicon : nullptr,
                         num::mix_seed(seed, 2));

  nlohmann::json data_hashes = nlohmann::json::array();
  TrainData data;
  num::SplitMix64 split_rng(num::mix_seed(seed, 3));
  for (const auto& ref : cfg.datasets) {
    auto eps = text::load_episodes(ref.path);
    data_hashes.push_back({{"path", ref.path}, {"fnv1a64", file_digest(ref.path)}});
    if (eps.empty()) throw TrainError(ref.path + ": no episodes");
    auto examples = builder.build_all(eps);
    if (cfg.valid.empty() && cfg.valid_fraction > 0 && examples.size() > 1) {
      for (std::size_t i = examples.size(); i > 1; --i) std::swap(examples[i - 1], examples[split_rng.below(i)]);
      const auto held = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.valid_fraction * examples.size()));
      data.valid.insert(data.valid.end(), examples.begin(), examples.begin() + static_cast<std::ptrdiff_t>(held));
      examples.erase(examples.begin(), examples.begin() + static_cast<std::ptrdiff_t>(held));
    }
    data.names.push_back(std::filesystem::path(ref.path).stem().string());
    data.weights.push_back(ref.weight > 0 ? ref.weight : static_cast<double>(examples.size()));
    data.datasets.push_back(std::move(examples));
  }
  for (const auto& ref : cfg.valid) {
    auto ex = builder.build_all(text::load_episodes(ref.path));
    data.valid.insert(data.valid.end(), ex.begin(), ex.end());
  }

  ChatModel m;
  nlohmann::json entry = {{"stage", stage_name(cfg.stage)},
                          {"config_hash", hex64(num::fnv1a64(cfg.to_json().dump()))},
                          {"seed", seed},
                          {"lr", cfg.lr},
                          {"data", data_hashes}};
  if (!cfg.init_checkpoint.empty()) {
    m = ChatModel::from_checkpoint(cfg.init_checkpoint);
    const auto init_hash = model::file_hash(cfg.init_checkpoint);
    entry["init_checkpoint_hash"] = init_hash;
    if (!m.provenance.empty() && !m.provenance.back().contains("checkpoint_hash"))
      m.provenance.back()["checkpoint_hash"] = init_hash;
  } else {
    text::Vocab vocab;
    if (!cfg.vocab.empty()) {
      std::ifstream in(cfg.vocab);
      if (!in) throw TrainError("cannot read vocab " + cfg.vocab);
      vocab = text::Vocab::from_json(std::string((std::istreambuf_iterator<char>(in)), {}));
    } else {
      std::vector<text::Example> all;
      for (const auto& d : data.datasets) all.insert(all.end(), d.begin(), d.end());
      vocab = text::Vocab::train(vocab_corpus(all), cfg.vocab_size);
    }
    const auto mc = model_config_from(cfg.model, vocab.size());
    m = ChatModel::fresh(mc, std::move(vocab), seed);
  }

  TrainOptions o;
  o.lr = cfg.lr;
  o.warmup_steps = cfg.warmup_steps;
  o.max_steps = cfg.max_steps;
  o.eval_interval = cfg.eval_interval;
  o.patience = cfg.patience;
  o.batch_size = cfg.batch_size;
  o.seed = seed;
  o.limits = cfg.limits;
  o.target_ppl = cfg.target_ppl;
  o.log_path = cfg.log;

  RunResult r;
  m.provenance.push_back(entry);
  r.outcome = train_model(m, data, o);
  m.provenance.back()["steps"] = r.outcome.steps;
  m.provenance.back()["best_val_ppl"] = r.outcome.best_val_ppl;
  r.provenance_entry = m.provenance.back();
  m.save(cfg.output);
  r.checkpoint = cfg.output;
  return r;
}

RunResult staged_pipeline(const TrainConfig& adapt, TrainConfig finetune) {
  if (adapt.stage != Stage::AdaptPretrain) throw TrainError("first stage must be adapt_pretrain");
  if (finetune.stage != Stage::Finetune) throw TrainError("second stage must be finetune");
  RunResult first;
  try {
    first = run_training(adapt);
  } catch (const std::exception& e) {
    throw TrainError(std::string("adapt_pretrain failed, finetune not started: ") + e.what());
  }
  finetune.init_checkpoint = first.checkpoint;
  return run_training(finetune);
}

}  // namespace mmb::train
