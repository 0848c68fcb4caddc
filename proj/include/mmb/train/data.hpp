#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mmb/imagefeat/features.hpp"
#include "mmb/numerics/rng.hpp"
#include "mmb/safety/safety.hpp"
#include "mmb/textdata/batch.hpp"
#include "mmb/textdata/episode.hpp"

namespace mmb::train {

using ImagePtr = std::shared_ptr<const img::ImageFeatures>;
/// Resolves an image id to features; throws img::FeatureNotFound when unknown.
using ImageResolver = std::function<ImagePtr(const std::string&)>;

/// Caching resolver over an open feature store. Safe to call from several threads.
ImageResolver store_resolver(std::shared_ptr<const img::FeatureStore> store);

struct ExampleOptions {
  bool include_knowledge = true;
  /// Append the gender control string computed from the label.
  bool degender = false;
  /// Probability of replacing a concrete style with its bucket string.
  double bucket_p = 0.0;
  /// Drop images; styles become "positive/neutral" so the text cannot leak image-linked style.
  bool no_image = false;
};

/// Episode → model example, applying the conditioning controls. Bucket draws come from a
/// seeded stream owned by the builder, so one builder reproduces one sequence of choices.
class ExampleBuilder {
 public:
  ExampleBuilder(ExampleOptions options, ImageResolver images, const safety::StyleRegistry* styles,
                 const safety::GenderLexicon* lexicon, std::uint64_t seed);

  text::Example build(const text::Episode& ep);
  /// Explicit conditioning, used at inference: style line and gender string replace whatever
  /// the episode and options would give. Empty optionals keep the defaults.
  text::Example build_with(const text::Episode& ep, const std::optional<std::string>& style,
                           const std::optional<std::string>& gender);
  std::vector<text::Example> build_all(const std::vector<text::Episode>& eps);

  const ExampleOptions& options() const { return options_; }

 private:
  ImagePtr image_for(const text::Episode& ep) const;

  ExampleOptions options_;
  ImageResolver images_;
  const safety::StyleRegistry* styles_;
  const safety::GenderLexicon* lexicon_;
  num::SplitMix64 rng_;
};

/// Training corpus for BPE: contexts and labels of the given examples.
std::vector<std::string> vocab_corpus(const std::vector<text::Example>& examples);

/// A toy image world: each image shows one colored animal. Features carry a color
/// prototype in the first half of every row and an animal prototype in the second half,
/// plus per-instance noise, so captions are predictable from the image alone.
class SynthWorld {
 public:
  SynthWorld(img::FeatureKind kind, std::uint64_t seed, double noise = 0.3);

  static const std::vector<std::string>& colors();
  static const std::vector<std::string>& animals();

  static std::string image_id(std::size_t color, std::size_t animal, std::size_t instance);
  /// Inverse of image_id; throws std::invalid_argument on foreign ids.
  static std::pair<std::size_t, std::size_t> classes_of(const std::string& image_id);

  img::ImageFeatures features(const std::string& image_id) const;
  ImageResolver resolver() const;
  img::FeatureKind kind() const { return kind_; }

 private:
  img::FeatureKind kind_;
  std::uint64_t seed_;
  double noise_;
  std::vector<std::vector<float>> color_proto_, animal_proto_;
};

std::string caption_for(std::size_t color, std::size_t animal);

/// Coco-role episodes: "a <color> <animal>" captions over instances starting at first_instance.
std::vector<text::Episode> synth_captions(std::size_t n, std::uint64_t seed, std::size_t first_instance = 0);

/// Image-Chat episodes whose reply tone follows the style's polarity. Negative styles reply with
/// insults found on the shipped blocklist.
std::vector<text::Episode> synth_image_chat(const safety::StyleRegistry& styles, std::size_t n, std::uint64_t seed,
                                            std::size_t first_instance = 0);

/// Text-only chit-chat whose replies mention male, female, both or no people.
std::vector<text::Episode> synth_dialogue(std::size_t n, std::uint64_t seed);

/// Labelled utterances for the offensive-language classifier.
std::vector<safety::LabeledUtterance> synth_offensive(std::size_t n, std::uint64_t seed);

/// Writes features for every image referenced by the episodes.
void write_world_features(const std::string& path, const SynthWorld& world, const std::vector<text::Episode>& eps);

}  // namespace mmb::train
