#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmb/model/config.hpp"
#include "mmb/numerics/tensor.hpp"

namespace mmb::model {

template <typename T>
struct AttentionWeights {
  num::Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct FeedForwardWeights {
  num::Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct EncoderLayer {
  num::Tensor<T> ln1_g, ln1_b;
  AttentionWeights<T> self_attn;
  num::Tensor<T> ln2_g, ln2_b;
  FeedForwardWeights<T> ffn;
};

template <typename T>
struct DecoderLayer {
  num::Tensor<T> ln1_g, ln1_b;
  AttentionWeights<T> self_attn;
  num::Tensor<T> ln2_g, ln2_b;
  AttentionWeights<T> cross_attn;
  num::Tensor<T> ln3_g, ln3_b;
  FeedForwardWeights<T> ffn;
};

/// Full learnable state. The output projection is tied to token_emb.
/// Copies share storage; use clone() for an independent copy.
template <typename T>
struct ModelParams {
  num::Tensor<T> token_emb;      // vocab × d
  num::Tensor<T> position_emb;   // max_positions × d
  num::Tensor<T> image_pos_emb;  // 100 × d
  num::Tensor<T> segment_emb;    // 2 × d: text = 0, image = 1
  num::Tensor<T> image_proj_w;   // 2048 × d
  num::Tensor<T> image_proj_b;   // d
  std::vector<EncoderLayer<T>> encoder;
  num::Tensor<T> enc_ln_g, enc_ln_b;
  std::vector<DecoderLayer<T>> decoder;
  num::Tensor<T> dec_ln_g, dec_ln_b;

  /// Stable name → tensor listing; order defines checkpoint layout and init order.
  std::vector<std::pair<std::string, num::Tensor<T>*>> named();
  std::vector<std::pair<std::string, const num::Tensor<T>*>> named() const;

  std::size_t parameter_count() const;
  void zero_grad();
  ModelParams clone() const;
  template <typename U>
  ModelParams<U> cast() const;
};

/// Expected shape of every named parameter for a config.
std::vector<std::pair<std::string, num::Shape>> parameter_manifest(const ModelConfig& config);

/// Random init: N(0, 0.02) for matrices, zeros for biases, ones for norm gains.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

/// Builds params from named flat arrays (checkpoint load path).
template <typename T>
ModelParams<T> params_from_values(const ModelConfig& config,
                                  std::vector<std::vector<float>> values_in_manifest_order);

}  // namespace mmb::model
