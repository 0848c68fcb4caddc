#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmb/numerics/tensor.hpp"

namespace mmb::num {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// a[m×k] · b[n×k]ᵀ, used for the tied output projection.
template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Adds a length-n bias to every row of an [m×n] matrix.
template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& bias);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Normalizes over the last axis, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Inverted dropout with a counter-based mask derived from seed; identity when p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::uint64_t seed);

/// Selects rows of a 2-D table; backward scatter-adds.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> rows);

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return add_row(matmul(x, weight), bias);
}

/// Row layout for batched multi-head attention. Queries are [batch·q_len × d],
/// keys/values are [batch·k_len × d]; key_mask marks valid key rows.
struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t q_len = 1;
  std::size_t k_len = 1;
  std::size_t heads = 1;
  std::vector<std::uint8_t> key_mask;
  bool causal = false;
};

/// Scaled dot-product attention. Query rows with no visible key produce zeros.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const AttentionLayout& layout);

template <typename T>
struct CrossEntropyResult {
  Tensor<T> loss;        // mean NLL over supervised positions
  std::size_t tokens = 0;
  double nll_sum = 0.0;  // sum of per-token NLL
};

/// Mean negative log-likelihood of targets under row-wise softmax(logits).
/// Positions equal to pad_id are ignored; throws std::invalid_argument if none remain.
template <typename T>
CrossEntropyResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets,
                                    int pad_id);

}  // namespace mmb::num
