#include "mmb/train/data.hpp"

#include <set>
#include <stdexcept>
#include <unordered_map>

#include "mmb/textdata/context.hpp"

namespace mmb::train {

ImageResolver store_resolver(std::shared_ptr<const img::FeatureStore> store) {
  struct Cache {
    std::mutex mu;
    std::unordered_map<std::string, ImagePtr> items;
  };
  auto cache = std::make_shared<Cache>();
  return [store, cache](const std::string& id) -> ImagePtr {
    {
      std::lock_guard lock(cache->mu);
      auto it = cache->items.find(id);
      if (it != cache->items.end()) return it->second;
    }
    auto feats = std::make_shared<const img::ImageFeatures>(store->load(id));
    std::lock_guard lock(cache->mu);
    return cache->items.emplace(id, std::move(feats)).first->second;
  };
}

ExampleBuilder::ExampleBuilder(ExampleOptions options, ImageResolver images, const safety::StyleRegistry* styles,
                               const safety::GenderLexicon* lexicon, std::uint64_t seed)
    : options_(options), images_(std::move(images)), styles_(styles), lexicon_(lexicon), rng_(seed) {
  if (options_.degender && !lexicon_) throw std::invalid_argument("degender needs a gender lexicon");
  if (options_.bucket_p > 0 && !styles_) throw std::invalid_argument("bucket replacement needs a style registry");
}

ImagePtr ExampleBuilder::image_for(const text::Episode& ep) const {
  if (options_.no_image || !ep.image_ref) return nullptr;
  if (!images_) throw img::FeatureNotFound("no feature source for image '" + *ep.image_ref + "'");
  return images_(*ep.image_ref);
}

text::Example ExampleBuilder::build(const text::Episode& ep) {
  std::optional<std::string> style = ep.style;
  if (style) {
    if (options_.no_image) style = std::string(safety::kPositiveNeutral);
    else if (options_.bucket_p > 0) style = safety::bucket_replace(*styles_, *style, options_.bucket_p, rng_);
  }
  std::optional<std::string> gender;
  if (options_.degender) gender = safety::classify_gender(ep.label, *lexicon_).control();
  return build_with(ep, style, gender);
}

text::Example ExampleBuilder::build_with(const text::Episode& ep, const std::optional<std::string>& style,
                                         const std::optional<std::string>& gender) {
  text::ControlSettings controls;
  controls.include_knowledge = options_.include_knowledge;
  controls.style = style ? style : ep.style;
  controls.gender = gender;
  return {text::assemble_context(ep, controls), ep.label, image_for(ep)};
}

std::vector<text::Example> ExampleBuilder::build_all(const std::vector<text::Episode>& eps) {
  std::vector<text::Example> out;
  out.reserve(eps.size());
  for (const auto& ep : eps) out.push_back(build(ep));
  return out;
}

std::vector<std::string> vocab_corpus(const std::vector<text::Example>& examples) {
  std::vector<std::string> out;
  out.reserve(examples.size() * 2);
  for (const auto& ex : examples) {
    out.push_back(ex.context);
    out.push_back(ex.label);
  }
  return out;
}

SynthWorld::SynthWorld(img::FeatureKind kind, std::uint64_t seed, double noise)
    : kind_(kind), seed_(seed), noise_(noise) {
  const std::size_t half = img::kFeatureDim / 2;
  auto proto = [&](std::uint64_t tag) {
    num::SplitMix64 rng(num::mix_seed(seed, tag));
    std::vector<float> v(half);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
  };
  for (std::size_t c = 0; c < colors().size(); ++c) color_proto_.push_back(proto(1000 + c));
  for (std::size_t a = 0; a < animals().size(); ++a) animal_proto_.push_back(proto(2000 + a));
}

const std::vector<std::string>& SynthWorld::colors() {
  static const std::vector<std::string> v = {"red", "blue", "green", "yellow", "black", "white", "brown", "pink"};
  return v;
}

const std::vector<std::string>& SynthWorld::animals() {
  static const std::vector<std::string> v = {"dog", "cat", "horse", "bird", "fish", "sheep", "cow", "frog"};
  return v;
}

std::string SynthWorld::image_id(std::size_t color, std::size_t animal, std::size_t instance) {
  return "c" + std::to_string(color) + "-a" + std::to_string(animal) + "-" + std::to_string(instance);
}

std::pair<std::size_t, std::size_t> SynthWorld::classes_of(const std::string& id) {
  std::size_t c = 0, a = 0, i = 0;
  char tail = 0;
  if (std::sscanf(id.c_str(), "c%zu-a%zu-%zu%c", &c, &a, &i, &tail) != 3 || c >= colors().size() ||
      a >= animals().size())
    throw std::invalid_argument("not a synthetic image id: " + id);
  return {c, a};
}

img::ImageFeatures SynthWorld::features(const std::string& id) const {
  const auto [c, a] = classes_of(id);
  img::ImageFeatures f;
  f.kind = kind_;
  f.image_id = id;
  const std::size_t rows = img::rows_for(kind_), half = img::kFeatureDim / 2;
  f.matrix.resize(rows * img::kFeatureDim);
  num::SplitMix64 rng(num::mix_seed(seed_, num::fnv1a64(id)));
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = f.matrix.data() + r * img::kFeatureDim;
    for (std::size_t k = 0; k < half; ++k) {
      row[k] = color_proto_[c][k] + static_cast<float>(noise_ * rng.normal());
      row[half + k] = animal_proto_[a][k] + static_cast<float>(noise_ * rng.normal());
    }
  }
  return f;
}

ImageResolver SynthWorld::resolver() const {
  auto self = std::make_shared<const SynthWorld>(*this);
  auto cache = std::make_shared<std::pair<std::mutex, std::unordered_map<std::string, ImagePtr>>>();
  return [self, cache](const std::string& id) -> ImagePtr {
    std::lock_guard lock(cache->first);
    auto& slot = cache->second[id];
    if (!slot) {
      try {
        slot = std::make_shared<const img::ImageFeatures>(self->features(id));
      } catch (const std::invalid_argument&) {
        cache->second.erase(id);
        throw img::FeatureNotFound("unknown image '" + id + "'");
      }
    }
    return slot;
  };
}

std::string caption_for(std::size_t color, std::size_t animal) {
  return "a " + SynthWorld::colors().at(color) + " " + SynthWorld::animals().at(animal);
}

std::vector<text::Episode> synth_captions(std::size_t n, std::uint64_t seed, std::size_t first_instance) {
  num::SplitMix64 rng(seed);
  std::vector<text::Episode> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = rng.below(SynthWorld::colors().size()), a = rng.below(SynthWorld::animals().size());
    text::Episode ep;
    ep.dataset_role = text::DatasetRole::Coco;
    ep.image_ref = SynthWorld::image_id(c, a, first_instance + i);
    ep.label = caption_for(c, a);
    out.push_back(std::move(ep));
  }
  return out;
}

std::vector<text::Episode> synth_image_chat(const safety::StyleRegistry& styles, std::size_t n, std::uint64_t seed,
                                            std::size_t first_instance) {
  static const std::vector<std::string> core = {"Cheerful", "Happy", "Sweet", "Relaxed", "Cruel", "Angry", "Sad",
                                                "Fearful"};
  static const std::vector<std::string> kind = {"what a lovely", "i really like this", "such a cute",
                                                "look at that happy"};
  static const std::vector<std::string> rude = {"what a stupid", "that is an ugly", "i hate you and this",
                                                "shut up about this dumb"};
  static const std::vector<std::string> openers = {"what do you think of this ?", "look at this picture",
                                                   "do you like it ?"};
  num::SplitMix64 rng(seed);
  std::vector<text::Episode> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = rng.below(SynthWorld::colors().size()), a = rng.below(SynthWorld::animals().size());
    const std::string style =
        rng.below(2) == 0 ? core[rng.below(core.size())] : styles.styles()[rng.below(styles.size())];
    const bool negative = styles.bucket(style) == safety::Bucket::Negative;
    const auto& pool = negative ? rude : kind;
    text::Episode ep;
    ep.dataset_role = text::DatasetRole::ImageChat;
    ep.image_ref = SynthWorld::image_id(c, a, first_instance + i);
    ep.style = style;
    if (rng.below(2) == 0) ep.context_turns.push_back(openers[rng.below(openers.size())]);
    ep.label = pool[rng.below(pool.size())] + " " + SynthWorld::colors()[c] + " " + SynthWorld::animals()[a];
    out.push_back(std::move(ep));
  }
  return out;
}

std::vector<text::Episode> synth_dialogue(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> male = {"he", "my brother", "my dad", "my uncle"};
  static const std::vector<std::string> female = {"she", "my sister", "my mom", "my aunt"};
  static const std::vector<std::string> neutral = {"my friend", "our neighbor", "the teacher", "my cousin"};
  static const std::vector<std::string> actions = {"went to the park today", "likes to cook pasta",
                                                   "plays the guitar at night", "is reading a long book",
                                                   "works at the bakery"};
  static const std::vector<std::string> prompts = {"what did you do today ?", "tell me about your family",
                                                   "how was your weekend ?", "any news ?"};
  static const std::vector<std::string> personas = {"i have two pets .", "i like to hike .", "i work nights ."};
  num::SplitMix64 rng(seed);
  std::vector<text::Episode> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string subject;
    const auto r = rng.below(20);
    if (r < 6) subject = male[rng.below(male.size())];
    else if (r < 12) subject = female[rng.below(female.size())];
    else if (r < 15) subject = female[1 + rng.below(3)] + " and " + male[1 + rng.below(3)];
    else subject = neutral[rng.below(neutral.size())];
    text::Episode ep;
    ep.dataset_role = text::DatasetRole::ConvAI2;
    ep.persona_lines.push_back(personas[rng.below(personas.size())]);
    ep.context_turns.push_back(prompts[rng.below(prompts.size())]);
    ep.label = subject + " " + actions[rng.below(actions.size())];
    out.push_back(std::move(ep));
  }
  return out;
}

std::vector<safety::LabeledUtterance> synth_offensive(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> bad = {"you are an idiot", "shut up loser", "what a pathetic thing",
                                               "this is disgusting and ugly", "nobody likes you", "you are worthless",
                                               "i hate you", "go away freak"};
  static const std::vector<std::string> good = {"what a lovely day", "i like your photo", "the dog looks happy",
                                                "thanks for sharing", "that sounds fun", "have a great evening",
                                                "i enjoy hiking too", "the sky is so blue"};
  static const std::vector<std::string> filler = {"honestly", "well", "today", "wow", "really", "ok"};
  num::SplitMix64 rng(seed);
  std::vector<safety::LabeledUtterance> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool off = rng.below(2) == 1;
    const auto& pool = off ? bad : good;
    out.push_back({filler[rng.below(filler.size())] + " " + pool[rng.below(pool.size())], off});
  }
  return out;
}

void write_world_features(const std::string& path, const SynthWorld& world, const std::vector<text::Episode>& eps) {
  std::vector<img::ImageFeatures> entries;
  std::set<std::string> seen;
  for (const auto& ep : eps)
    if (ep.image_ref && seen.insert(*ep.image_ref).second) entries.push_back(world.features(*ep.image_ref));
  img::write_feature_file(path, world.kind(), entries);
}

}  // namespace mmb::train
