// mmb: command line front end for training, evaluation, safety reports and serving.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmb/eval/report.hpp"
#include "mmb/serve/http.hpp"
#include "mmb/train/trainer.hpp"

using namespace mmb;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::shared_ptr<const img::FeatureStore> open_store(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<const img::FeatureStore>(img::FeatureStore::open(path));
}

train::ImageResolver resolver_for(const std::shared_ptr<const img::FeatureStore>& store) {
  return store ? train::store_resolver(store) : train::ImageResolver{};
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

/// Writes to the file when given, else stdout.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    auto out = open_out(path);
    out << text;
  }
}

std::pair<std::string, std::string> split_pair(const std::string& s, char sep) {
  const auto p = s.find(sep);
  if (p == std::string::npos) return {s, ""};
  return {s.substr(0, p), s.substr(p + 1)};
}

/// "name=path" or a bare path (name = file stem).
std::pair<std::string, std::string> named_path(const std::string& s) {
  auto [a, b] = split_pair(s, '=');
  if (b.empty()) return {fs::path(a).stem().string(), a};
  return {a, b};
}

json parse_value(const std::string& v) {
  auto j = json::parse(v, nullptr, false);
  return j.is_discarded() ? json(v) : j;
}

void set_dotted(json& root, const std::string& key, const json& value) {
  json* node = &root;
  std::size_t start = 0;
  for (auto dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
    node = &(*node)[key.substr(start, dot - start)];
    start = dot + 1;
  }
  (*node)[key.substr(start)] = value;
}

// ---------------------------------------------------------------------------------------------

struct TrainFlags {
  std::string config;
  std::vector<std::string> datasets, valid, sets;
  std::string features, vocab, init, output, log, preset, stage;
  double lr = 0, target_ppl = 0, valid_fraction = 0;
  std::size_t max_steps = 0, warmup = 0, eval_interval = 0, patience = 0, batch = 0, vocab_size = 0;
  std::uint64_t seed = 0;
};

void add_train_flags(CLI::App* sub, TrainFlags& f, bool with_stage) {
  sub->add_option("-c,--config", f.config, "JSON training config")->check(CLI::ExistingFile);
  sub->add_option("--dataset", f.datasets, "training JSONL, optionally path:weight (repeatable)");
  sub->add_option("--valid", f.valid, "validation JSONL (repeatable)");
  sub->add_option("--features", f.features, "feature store file");
  sub->add_option("--vocab", f.vocab, "vocabulary JSON");
  sub->add_option("--vocab-size", f.vocab_size);
  sub->add_option("--init-checkpoint", f.init);
  sub->add_option("-o,--output", f.output, "checkpoint to write");
  sub->add_option("--log", f.log, "JSONL training log");
  sub->add_option("--preset", f.preset, "model preset: desk or reference");
  sub->add_option("--lr", f.lr);
  sub->add_option("--max-steps", f.max_steps);
  sub->add_option("--warmup-steps", f.warmup);
  sub->add_option("--eval-interval", f.eval_interval);
  sub->add_option("--patience", f.patience);
  sub->add_option("--batch-size", f.batch);
  sub->add_option("--seed", f.seed);
  sub->add_option("--target-ppl", f.target_ppl);
  sub->add_option("--valid-fraction", f.valid_fraction);
  sub->add_option("--set", f.sets, "override any config key: key=json, dotted keys reach nested objects");
  if (with_stage) sub->add_option("--stage", f.stage, "adapt_pretrain or finetune");
}

train::TrainConfig resolve_config(CLI::App* sub, const TrainFlags& f, std::optional<train::Stage> forced) {
  json j = json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    j = json::parse(in);
  }
  auto given = [&](const char* name) {
    const auto* opt = sub->get_option_no_throw(name);
    return opt && opt->count() > 0;
  };
  auto refs = [](const std::vector<std::string>& items) {
    json arr = json::array();
    for (const auto& s : items) {
      const auto colon = s.rfind(':');
      double w = 0;
      std::string path = s;
      if (colon != std::string::npos) {
        try {
          w = std::stod(s.substr(colon + 1));
          path = s.substr(0, colon);
        } catch (const std::exception&) {
          w = 0;
        }
      }
      arr.push_back({{"path", path}, {"weight", w}});
    }
    return arr;
  };
  if (given("--dataset")) j["datasets"] = refs(f.datasets);
  if (given("--valid")) j["valid"] = refs(f.valid);
  if (given("--features")) j["features"] = f.features;
  if (given("--vocab")) j["vocab"] = f.vocab;
  if (given("--vocab-size")) j["vocab_size"] = f.vocab_size;
  if (given("--init-checkpoint")) j["init_checkpoint"] = f.init;
  if (given("--output")) j["output"] = f.output;
  if (given("--log")) j["log"] = f.log;
  if (given("--preset")) j["model"]["preset"] = f.preset;
  if (given("--lr")) j["lr"] = f.lr;
  if (given("--max-steps")) j["max_steps"] = f.max_steps;
  if (given("--warmup-steps")) j["warmup_steps"] = f.warmup;
  if (given("--eval-interval")) j["eval_interval"] = f.eval_interval;
  if (given("--patience")) j["patience"] = f.patience;
  if (given("--batch-size")) j["batch_size"] = f.batch;
  if (given("--seed")) j["seed"] = f.seed;
  if (given("--target-ppl")) j["target_ppl"] = f.target_ppl;
  if (given("--valid-fraction")) j["valid_fraction"] = f.valid_fraction;
  if (given("--stage")) j["stage"] = f.stage;
  for (const auto& s : f.sets) {
    auto [k, v] = split_pair(s, '=');
    set_dotted(j, k, parse_value(v));
  }
  if (forced) j["stage"] = std::string(train::stage_name(*forced));
  return train::TrainConfig::from_json(j);
}

int run_train(CLI::App* sub, const TrainFlags& f, std::optional<train::Stage> forced) {
  const auto cfg = resolve_config(sub, f, forced);
  const auto r = train::run_training(cfg);
  json summary = {{"checkpoint", r.checkpoint},
                  {"steps", r.outcome.steps},
                  {"best_step", r.outcome.best_step},
                  {"initial_val_ppl", r.outcome.initial_val_ppl},
                  {"best_val_ppl", r.outcome.best_val_ppl},
                  {"early_stopped", r.outcome.early_stopped}};
  std::cout << summary.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct BuilderFlags {
  bool no_image = false, degender = false, no_knowledge = false;
  double bucket_p = 0.0;
  std::uint64_t seed = 1;
};

void add_builder_flags(CLI::App* sub, BuilderFlags& b) {
  sub->add_flag("--no-image", b.no_image, "drop images (style becomes positive/neutral)");
  sub->add_flag("--degender", b.degender, "append the gender control computed from each label");
  sub->add_flag("--no-knowledge", b.no_knowledge, "leave out knowledge lines");
  sub->add_option("--bucket-p", b.bucket_p, "probability of replacing a style with its bucket");
  sub->add_option("--data-seed", b.seed, "seed for bucket draws");
}

struct BuilderBundle {
  std::shared_ptr<const img::FeatureStore> store;
  std::unique_ptr<safety::StyleRegistry> styles;
  std::unique_ptr<safety::GenderLexicon> lexicon;
  std::unique_ptr<train::ExampleBuilder> builder;
};

BuilderBundle make_builder(const BuilderFlags& b, const std::string& features) {
  BuilderBundle out;
  out.store = open_store(features);
  out.styles = std::make_unique<safety::StyleRegistry>(safety::StyleRegistry::load_default());
  out.lexicon = std::make_unique<safety::GenderLexicon>(safety::GenderLexicon::load_default());
  train::ExampleOptions o;
  o.no_image = b.no_image;
  o.degender = b.degender;
  o.include_knowledge = !b.no_knowledge;
  o.bucket_p = b.bucket_p;
  out.builder = std::make_unique<train::ExampleBuilder>(o, resolver_for(out.store), out.styles.get(),
                                                        out.lexicon.get(), b.seed);
  return out;
}

struct BeamFlags {
  std::size_t beam_size = 0, min_length = 0, max_length = 0, ngram = 0;
  bool no_context_block = false, no_gen_block = false;
};

void add_beam_flags(CLI::App* sub, BeamFlags& f) {
  sub->add_option("--beam-size", f.beam_size);
  sub->add_option("--min-length", f.min_length);
  sub->add_option("--max-length", f.max_length);
  sub->add_option("--block-ngram", f.ngram);
  sub->add_flag("--no-context-block", f.no_context_block, "allow n-grams repeated from the context");
  sub->add_flag("--no-gen-block", f.no_gen_block, "allow n-grams repeated within the reply");
}

decode::BeamConfig beam_from(CLI::App* sub, const BeamFlags& f) {
  auto c = train::desk_beam();
  if (sub->count("--beam-size")) c.beam_size = f.beam_size;
  if (sub->count("--min-length")) c.min_length = f.min_length;
  if (sub->count("--max-length")) c.max_length = f.max_length;
  if (sub->count("--block-ngram")) c.block_ngram = f.ngram;
  c.block_from_context = !f.no_context_block;
  c.block_within_generation = !f.no_gen_block;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------------------------

std::vector<std::string> read_utterances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '{') {
      const auto j = json::parse(line);
      out.push_back(j.contains("text") ? j["text"].get<std::string>() : j.value("label", ""));
    } else {
      out.push_back(line);
    }
  }
  return out;
}

void write_labeled_tsv(const std::string& path, const std::vector<safety::LabeledUtterance>& data) {
  auto out = open_out(path);
  for (const auto& u : data) out << (u.offensive ? 1 : 0) << '\t' << u.text << '\n';
}

std::unique_ptr<serve::HttpServer> g_server;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal open-domain dialogue: training, evaluation, safety reports and serving"};
  app.require_subcommand(1);

  TrainFlags adapt_flags, train_flags;
  auto* adapt = app.add_subcommand("adapt-pretrain", "domain-adaptive pre-training (captions, dialogue text)");
  add_train_flags(adapt, adapt_flags, false);
  auto* trn = app.add_subcommand("train", "multi-task fine-tuning (stage taken from the config)");
  add_train_flags(trn, train_flags, true);

  std::string checkpoint, features, out_path;
  std::vector<std::string> data_paths;
  BuilderFlags eval_b, gen_b, tox_b;
  BeamFlags eval_beam, gen_beam, tox_beam;
  std::size_t max_generations = 64, max_examples = 0, ctx_tokens = 0;

  auto* ev = app.add_subcommand("eval", "perplexity and generation metrics per dataset, as TSV");
  ev->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_paths, "name=episodes.jsonl (repeatable)")->required();
  ev->add_option("--features", features);
  ev->add_option("--max-generations", max_generations, "examples per dataset scored with generation metrics");
  ev->add_option("--max-context", ctx_tokens, "context tokens kept");
  ev->add_option("-o,--out", out_path, "TSV output (stdout when omitted)");
  add_builder_flags(ev, eval_b);
  add_beam_flags(ev, eval_beam);

  std::string style, gender;
  auto* gen = app.add_subcommand("generate", "beam-search replies for every episode, as JSONL");
  gen->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  gen->add_option("--data", data_paths, "episodes JSONL")->required()->expected(1);
  gen->add_option("--features", features);
  gen->add_option("--style", style, "style line replacing each episode's own");
  gen->add_option("--gender", gender, "gender control string such as \"f0 m0\"");
  gen->add_option("--max-examples", max_examples);
  gen->add_option("-o,--out", out_path);
  add_builder_flags(gen, gen_b);
  add_beam_flags(gen, gen_beam);

  std::vector<std::string> conditionings;
  std::string classifier_path;
  bool by_polarity = false;
  auto* tox = app.add_subcommand("safety-report", "offensive-reply rate per style conditioning, as TSV");
  tox->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  tox->add_option("--data", data_paths, "episodes JSONL")->required()->expected(1);
  tox->add_option("--features", features);
  tox->add_option("--conditioning", conditionings, "style or bucket string (repeatable; default: every style)");
  tox->add_option("--classifier", classifier_path, "offensive classifier JSON");
  tox->add_flag("--by-polarity", by_polarity, "split columns by the polarity of each episode's own style");
  tox->add_option("--max-examples", max_examples);
  tox->add_option("-o,--out", out_path);
  add_builder_flags(tox, tox_b);
  add_beam_flags(tox, tox_beam);

  std::vector<std::string> sources;
  auto* dg = app.add_subcommand("degender-report", "share of utterances with male and female words, as TSV");
  dg->add_option("--source", sources, "name=file with one utterance per line or JSONL with \"text\"")->required();
  dg->add_option("-o,--out", out_path);

  std::string clf_data;
  auto* tc = app.add_subcommand("train-classifier", "fit the offensive-language classifier from a labelled TSV");
  tc->add_option("--data", clf_data, "TSV: 0|1<TAB>text")->required()->check(CLI::ExistingFile);
  tc->add_option("-o,--out", out_path)->required();

  std::string host = "127.0.0.1", blocklist, degender_default = "f0 m0", bucket_default = "positive/neutral",
              static_dir, text_style;
  int port = 8080;
  auto* sv = app.add_subcommand("serve", "HTTP chat service");
  sv->add_option("--port", port);
  sv->add_option("--host", host);
  sv->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  sv->add_option("--features", features);
  sv->add_option("--blocklist", blocklist, "blocklist file (default: shipped list)");
  sv->add_option("--classifier", classifier_path);
  sv->add_option("--degender", degender_default, "default gender control string");
  sv->add_option("--bucket", bucket_default, "default style line for image sessions");
  sv->add_option("--text-style", text_style, "style line for text-only sessions (none by default)");
  sv->add_option("--static-dir", static_dir, "directory served under /static (image thumbnails)");
  BeamFlags serve_beam;
  add_beam_flags(sv, serve_beam);

  std::string synth_out;
  std::size_t synth_n = 512;
  std::uint64_t synth_seed = 1;
  std::string synth_kind = "global";
  auto* sd = app.add_subcommand("synth-data", "write a synthetic fixture corpus with features and configs");
  sd->add_option("-o,--out", synth_out)->required();
  sd->add_option("-n,--count", synth_n, "episodes per dataset");
  sd->add_option("--seed", synth_seed);
  sd->add_option("--kind", synth_kind, "global, spatial or region");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*adapt) return run_train(adapt, adapt_flags, train::Stage::AdaptPretrain);
    if (*trn) return run_train(trn, train_flags, std::nullopt);

    if (*ev) {
      const auto m = train::ChatModel::from_checkpoint(checkpoint);
      auto bundle = make_builder(eval_b, features);
      std::vector<std::pair<std::string, std::vector<text::Episode>>> sets;
      for (const auto& d : data_paths) {
        auto [name, path] = named_path(d);
        sets.emplace_back(name, text::load_episodes(path));
      }
      eval::EvalOptions o;
      o.beam = beam_from(ev, eval_beam);
      o.max_generations = max_generations;
      if (ev->count("--max-context")) o.limits.max_context = ctx_tokens;
      emit(out_path, eval::metrics_tsv(eval::evaluate(m, sets, *bundle.builder, o)));
      return 0;
    }

    if (*gen) {
      const auto m = train::ChatModel::from_checkpoint(checkpoint);
      auto bundle = make_builder(gen_b, features);
      const auto beam = beam_from(gen, gen_beam);
      auto eps = text::load_episodes(data_paths.front());
      if (max_examples && eps.size() > max_examples) eps.resize(max_examples);
      std::ostringstream out;
      for (const auto& ep : eps) {
        auto ex = (gen->count("--style") || gen->count("--gender"))
                      ? bundle.builder->build_with(ep, style.empty() ? std::nullopt : std::optional(style),
                                                   gender.empty() ? std::nullopt : std::optional(gender))
                      : bundle.builder->build(ep);
        const auto g = train::generate(m, ex, beam);
        out << json{{"context", ex.context},   {"text", g.text},         {"label", ep.label},
                    {"log_prob", g.log_prob}, {"finished", g.finished}, {"fallback_steps", g.fallback_steps}}
                   .dump()
            << '\n';
      }
      emit(out_path, out.str());
      return 0;
    }

    if (*tox) {
      const auto m = train::ChatModel::from_checkpoint(checkpoint);
      auto bundle = make_builder(tox_b, features);
      const auto beam = beam_from(tox, tox_beam);
      auto eps = text::load_episodes(data_paths.front());
      if (max_examples && eps.size() > max_examples) eps.resize(max_examples);
      if (conditionings.empty()) conditionings = bundle.styles->styles();
      safety::BlocklistDetector bl(safety::Blocklist::load_default());
      std::optional<safety::OffensiveClassifier> clf;
      std::vector<const safety::Detector*> detectors{&bl};
      if (!classifier_path.empty()) {
        clf = safety::OffensiveClassifier::load(classifier_path);
        detectors.push_back(&*clf);
      }
      auto& builder = *bundle.builder;
      auto generator = [&](const text::Episode& ep, const std::string& c) {
        return train::generate(m, builder.build_with(ep, c, std::nullopt), beam).text;
      };
      safety::PolarityOf polarity;
      if (by_polarity) {
        const auto* reg = bundle.styles.get();
        polarity = [reg](const text::Episode& ep) -> std::optional<safety::Bucket> {
          if (!ep.style || !reg->contains(*ep.style)) return std::nullopt;
          return reg->bucket(*ep.style);
        };
      }
      emit(out_path, safety::toxicity_report(eps, conditionings, detectors, generator, polarity).to_tsv());
      return 0;
    }

    if (*dg) {
      std::vector<std::pair<std::string, std::vector<std::string>>> srcs;
      for (const auto& s : sources) {
        auto [name, path] = named_path(s);
        srcs.emplace_back(name, read_utterances(path));
      }
      emit(out_path, safety::degender_report(srcs, safety::GenderLexicon::load_default()).to_tsv());
      return 0;
    }

    if (*tc) {
      std::ifstream in(clf_data);
      const auto clf = safety::train_offensive_classifier(safety::read_labeled_tsv(in));
      clf.save(out_path);
      return 0;
    }

    if (*sv) {
      auto model = std::make_shared<const train::ChatModel>(train::ChatModel::from_checkpoint(checkpoint));
      serve::SafetyTools tools{blocklist.empty() ? safety::Blocklist::load_default() : safety::Blocklist::load(blocklist),
                               nullptr, safety::GenderLexicon::load_default(),
                               std::make_shared<const safety::StyleRegistry>(safety::StyleRegistry::load_default())};
      if (!classifier_path.empty())
        tools.classifier = std::make_shared<const safety::OffensiveClassifier>(safety::OffensiveClassifier::load(classifier_path));
      serve::ServeOptions o;
      o.default_gender = degender_default;
      o.default_bucket = bucket_default;
      if (!text_style.empty()) o.text_only_style = text_style;
      o.beam = beam_from(sv, serve_beam);
      auto svc = std::make_shared<serve::ChatService>(model, open_store(features), std::move(tools), o);
      g_server = std::make_unique<serve::HttpServer>(svc, static_dir);
      const int bound = g_server->bind(host, port);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << host << ':' << bound << '\n';
      g_server->listen();
      g_server.reset();
      return 0;
    }

    if (*sd) {
      fs::create_directories(synth_out);
      const fs::path dir(synth_out);
      const auto styles = safety::StyleRegistry::load_default();
      train::SynthWorld world(img::parse_kind(synth_kind), synth_seed);
      const auto coco = train::synth_captions(synth_n, synth_seed + 1);
      const auto ic = train::synth_image_chat(styles, synth_n, synth_seed + 2);
      const auto chat = train::synth_dialogue(synth_n, synth_seed + 3);
      auto all = coco;
      all.insert(all.end(), ic.begin(), ic.end());
      train::write_world_features((dir / "features.mmf").string(), world, all);
      text::save_episodes((dir / "coco.jsonl").string(), coco);
      text::save_episodes((dir / "image_chat.jsonl").string(), ic);
      text::save_episodes((dir / "convai2.jsonl").string(), chat);
      write_labeled_tsv((dir / "offensive.tsv").string(), train::synth_offensive(synth_n, synth_seed + 4));

      train::TrainConfig a;
      a.stage = train::Stage::AdaptPretrain;
      a.datasets = {{(dir / "coco.jsonl").string(), 0}};
      a.features = (dir / "features.mmf").string();
      a.model = {{"preset", "desk"}, {"feature_kind", synth_kind}};
      a.lr = 1e-3;
      a.warmup_steps = 50;
      a.max_steps = 500;
      a.seed = synth_seed;
      a.output = (dir / "adapt.ckpt").string();
      a.log = (dir / "adapt.log.jsonl").string();
      auto f = a;
      f.stage = train::Stage::Finetune;
      f.datasets = {{(dir / "image_chat.jsonl").string(), 0}, {(dir / "convai2.jsonl").string(), 0}};
      f.init_checkpoint = a.output;
      f.output = (dir / "finetune.ckpt").string();
      f.log = (dir / "finetune.log.jsonl").string();
      open_out((dir / "adapt.json").string()) << a.to_json().dump(2) << '\n';
      open_out((dir / "finetune.json").string()) << f.to_json().dump(2) << '\n';
      std::cout << "wrote synthetic corpus to " << dir.string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
