#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmb/decode/beam.hpp"
#include "mmb/model/checkpoint.hpp"
#include "mmb/model/transformer.hpp"
#include "mmb/textdata/batch.hpp"
#include "mmb/textdata/vocab.hpp"

namespace mmb::train {

/// A model together with the vocabulary it was trained with.
struct ChatModel {
  model::ModelConfig config;
  model::ModelParams<float> params;
  text::Vocab vocab;
  nlohmann::json provenance = nlohmann::json::array();

  static ChatModel from_checkpoint(const std::string& path);
  static ChatModel fresh(const model::ModelConfig& config, text::Vocab vocab, std::uint64_t seed);
  model::Checkpoint to_checkpoint() const;
  void save(const std::string& path) const { model::save_checkpoint(path, to_checkpoint()); }
};

struct Generation {
  std::string text;
  std::vector<int> tokens;  // generated ids, eos excluded
  std::vector<int> context;  // non-pad input ids used for context blocking
  double log_prob = 0.0;
  bool finished = false;
  std::size_t fallback_steps = 0;
};

/// Limits tightened so context and label fit the model's position table.
text::BatchLimits fit_limits(const model::ModelConfig& config, text::BatchLimits limits);

/// Beam config for desk-sized models: short replies, small beam.
decode::BeamConfig desk_beam();

/// Beam search reply for one example. pad, bos and unk are never generated.
Generation generate(const ChatModel& m, const text::Example& ex, const decode::BeamConfig& beam,
                    const text::BatchLimits& limits = {});

struct Perplexity {
  double nll_sum = 0.0;
  std::size_t tokens = 0;
  /// Throws std::invalid_argument on zero tokens.
  double value() const;
};

/// Teacher-forced perplexity over pre-built batches.
Perplexity perplexity(const model::ModelParams<float>& params, const model::ModelConfig& config,
                      std::span<const text::Batch> batches);

Perplexity perplexity(const ChatModel& m, std::span<const text::Example> examples,
                      const text::BatchLimits& limits = {}, std::size_t batch_size = 16);

std::vector<text::Batch> make_batches(std::span<const text::Example> examples, const text::Vocab& vocab,
                                      const text::BatchLimits& limits, std::size_t batch_size);

}  // namespace mmb::train
