#include "mmb/train/ablation.hpp"

#include <sstream>

#include "mmb/train/trainer.hpp"

namespace mmb::train {

eval::CellRunner synthetic_cell_runner(const SynthAblationSpec& spec) {
  return [spec](const eval::AblationCell& cell) {
    const auto kind = img::parse_kind(cell.value("features"));
    const auto fusion = model::parse_fusion(cell.value("fusion"));
    std::vector<std::string> mix;
    std::stringstream ss(cell.value("data"));
    for (std::string part; std::getline(ss, part, '+');) mix.push_back(part);

    SynthWorld world(kind, spec.seed);
    const auto styles = safety::StyleRegistry::load_default();
    auto episodes_for = [&](const std::string& name, std::size_t n, std::uint64_t seed, std::size_t first) {
      if (name == "image_chat") return synth_image_chat(styles, n, seed, first);
      if (name == "coco") return synth_captions(n, seed, first);
      if (name == "convai2") return synth_dialogue(n, seed);
      throw TrainError("unknown ablation dataset '" + name + "'");
    };
    const std::vector<std::string> all = {"convai2", "coco", "image_chat"};
    ExampleBuilder builder({}, world.resolver(), &styles, nullptr, spec.seed);

    TrainData data;
    for (std::size_t i = 0; i < mix.size(); ++i) {
      data.names.push_back(mix[i]);
      data.datasets.push_back(builder.build_all(episodes_for(mix[i], spec.train_per_dataset, spec.seed + 10 + i, 0)));
    }
    std::vector<std::pair<std::string, std::vector<text::Episode>>> valid;
    for (std::size_t i = 0; i < all.size(); ++i)
      valid.emplace_back(all[i], episodes_for(all[i], spec.valid_per_dataset, spec.seed + 100 + i, 1'000'000));
    for (const auto& [name, eps] : valid)
      if (std::find(mix.begin(), mix.end(), name) != mix.end()) {
        auto ex = builder.build_all(eps);
        data.valid.insert(data.valid.end(), ex.begin(), ex.end());
      }

    std::vector<text::Example> corpus;
    for (const auto& d : data.datasets) corpus.insert(corpus.end(), d.begin(), d.end());
    for (const auto& [name, eps] : valid) {
      auto ex = builder.build_all(eps);
      corpus.insert(corpus.end(), ex.begin(), ex.end());
    }
    auto vocab = text::Vocab::train(vocab_corpus(corpus), 400);
    auto overrides = spec.model;
    overrides["fusion"] = std::string(model::fusion_name(fusion));
    overrides["feature_kind"] = std::string(img::kind_name(kind));
    const auto mc = model_config_from(overrides, vocab.size());
    auto m = ChatModel::fresh(mc, std::move(vocab), spec.seed);

    TrainOptions o;
    o.lr = spec.lr;
    o.warmup_steps = spec.steps / 10;
    o.max_steps = spec.steps;
    o.eval_interval = std::max<std::size_t>(1, spec.steps / 4);
    o.patience = spec.steps;
    o.batch_size = spec.batch_size;
    o.seed = spec.seed;
    train_model(m, data, o);

    eval::EvalOptions eo;
    eo.max_generations = spec.max_generations;
    return eval::evaluate(m, valid, builder, eo);
  };
}

}  // namespace mmb::train
