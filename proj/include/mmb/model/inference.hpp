#pragma once

#include <map>
#include <memory>
#include <span>
#include <vector>

#include "mmb/decode/step_model.hpp"
#include "mmb/model/transformer.hpp"

namespace mmb::model {

/// Incremental decoder over one example's encoder memory. Self-attention keys
/// and values are cached per prefix, so extending a prefix by one token costs
/// one position's worth of work. Prefixes sharing history share cache nodes.
/// Not thread-safe; create one per decode.
class CachedDecoder : public decode::StepModel {
 public:
  CachedDecoder(const ModelParams<float>& params, const ModelConfig& config,
                const EncoderOutput<float>& memory, std::size_t example = 0);

  std::size_t vocab_size() const override { return config_.vocab_size; }
  int bos_id() const override;
  int eos_id() const override;
  std::vector<double> next_log_probs(std::span<const int> prefix) override;

  /// Raw next-token logits (pre-softmax).
  std::vector<float> logits(std::span<const int> prefix);

 private:
  struct State {
    std::shared_ptr<const State> parent;
    std::size_t position = 0;
    std::vector<std::vector<float>> keys;    // per layer, d
    std::vector<std::vector<float>> values;  // per layer, d
    std::vector<float> logits;
  };

  std::shared_ptr<const State> state_for(std::span<const int> prefix);
  std::shared_ptr<const State> extend(std::shared_ptr<const State> parent, int token,
                                      std::size_t position) const;

  ModelParams<float> params_;
  ModelConfig config_;
  std::size_t mem_rows_ = 0;
  std::vector<std::vector<float>> cross_k_;  // per layer, mem_rows × d
  std::vector<std::vector<float>> cross_v_;
  std::map<std::vector<int>, std::shared_ptr<const State>> cache_;
};

}  // namespace mmb::model
