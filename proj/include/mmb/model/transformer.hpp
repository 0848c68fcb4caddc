#pragma once

#include <cstdint>
#include <vector>

#include "mmb/model/config.hpp"
#include "mmb/model/params.hpp"
#include "mmb/numerics/ops.hpp"
#include "mmb/textdata/batch.hpp"

namespace mmb::model {

struct ForwardOptions {
  bool train = false;        // enables dropout
  std::uint64_t seed = 0;    // dropout stream
};

/// Decoder memory for a batch: [batch·mem_len × d] plus a key mask.
template <typename T>
struct EncoderOutput {
  num::Tensor<T> memory;
  std::vector<std::uint8_t> memory_mask;
  std::size_t batch = 0;
  std::size_t mem_len = 0;
  /// Rows produced by the encoder stack itself (Late fusion appends image rows after these).
  std::size_t enc_len = 0;
};

/// Encodes a batch.
///  None:  text only, mem_len = S.
///  Early: image rows (segment 1, image position table) precede the text rows
///         (segment 0) and are jointly self-attended, mem_len = rows + S.
///  Late:  text-only encoder, projected image rows appended after, mem_len = S + rows.
/// Examples without an image get masked placeholder rows.
template <typename T>
EncoderOutput<T> encode(const ModelParams<T>& params, const ModelConfig& config,
                        const text::Batch& batch, const ForwardOptions& options = {});

/// Teacher-forced decoder: logits [batch·len × vocab] for decoder_inputs [batch × len].
template <typename T>
num::Tensor<T> decode_logits(const ModelParams<T>& params, const ModelConfig& config,
                             const EncoderOutput<T>& memory, const std::vector<int>& decoder_inputs,
                             std::size_t len, const ForwardOptions& options = {});

template <typename T>
struct LossOutput {
  num::Tensor<T> loss;  // mean NLL
  std::size_t tokens = 0;
  double nll_sum = 0.0;
};

/// Cross-entropy of target_ids[1:] given target_ids[:-1] (bos-shifted).
template <typename T>
LossOutput<T> forward_loss(const ModelParams<T>& params, const ModelConfig& config,
                           const text::Batch& batch, const ForwardOptions& options = {});

}  // namespace mmb::model
