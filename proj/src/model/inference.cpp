#include "mmb/model/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmb/numerics/kernels.hpp"
#include "mmb/textdata/vocab.hpp"

namespace mmb::model {

namespace {

namespace k = num::kernel;

// out[n] = x[m] · W[m×n] + b[n]
std::vector<float> affine(const std::vector<float>& x, const num::Tensor<float>& w,
                          const num::Tensor<float>& b) {
  const std::size_t m = w.dim(0), n = w.dim(1);
  std::vector<float> out(b.data().begin(), b.data().end());
  k::gemm_nn(1, m, n, x.data(), w.data().data(), out.data(), true);
  return out;
}

std::vector<float> norm(const std::vector<float>& x, const num::Tensor<float>& g,
                        const num::Tensor<float>& b) {
  std::vector<float> out(x.size());
  k::layer_norm_row<float>(x.data(), x.size(), 1e-5f, g.data().data(), b.data().data(), nullptr, out.data());
  return out;
}

void add_into(std::vector<float>& x, const std::vector<float>& y) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

// Multi-head attention of one query over `count` keys/values fetched by accessor.
template <typename KeyAt, typename ValueAt>
std::vector<float> attend(const std::vector<float>& q, std::size_t count, std::size_t heads,
                          KeyAt key_at, ValueAt value_at) {
  const std::size_t d = q.size(), dh = d / heads;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  std::vector<float> out(d, 0.0f), scores(count);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t j = 0; j < count; ++j) scores[j] = k::dot(q.data() + h * dh, key_at(j) + h * dh, dh) * inv_sqrt;
    if (count == 0 || !k::softmax_row(scores.data(), count)) continue;
    for (std::size_t j = 0; j < count; ++j) {
      const float* v = value_at(j) + h * dh;
      for (std::size_t c = 0; c < dh; ++c) out[h * dh + c] += scores[j] * v[c];
    }
  }
  return out;
}

}  // namespace

CachedDecoder::CachedDecoder(const ModelParams<float>& params, const ModelConfig& config,
                             const EncoderOutput<float>& memory, std::size_t example)
    : params_(params), config_(config) {
  if (example >= memory.batch) throw num::DimensionError("CachedDecoder: example out of range");
  const std::size_t d = config.d_model, M = memory.mem_len;
  std::vector<float> rows;
  for (std::size_t j = 0; j < M; ++j) {
    if (!memory.memory_mask[example * M + j]) continue;
    const float* src = memory.memory.data().data() + (example * M + j) * d;
    rows.insert(rows.end(), src, src + d);
    ++mem_rows_;
  }
  for (const auto& L : params_.decoder) {
    const auto& ca = L.cross_attn;
    std::vector<float> kk(mem_rows_ * d), vv(mem_rows_ * d);
    for (std::size_t j = 0; j < mem_rows_; ++j) {
      std::copy_n(ca.bk.data().data(), d, kk.data() + j * d);
      std::copy_n(ca.bv.data().data(), d, vv.data() + j * d);
    }
    if (mem_rows_) {
      k::gemm_nn(mem_rows_, d, d, rows.data(), ca.wk.data().data(), kk.data(), true);
      k::gemm_nn(mem_rows_, d, d, rows.data(), ca.wv.data().data(), vv.data(), true);
    }
    cross_k_.push_back(std::move(kk));
    cross_v_.push_back(std::move(vv));
  }
}

int CachedDecoder::bos_id() const { return text::Vocab::kBos; }
int CachedDecoder::eos_id() const { return text::Vocab::kEos; }

std::shared_ptr<const CachedDecoder::State> CachedDecoder::extend(std::shared_ptr<const State> parent,
                                                                  int token, std::size_t position) const {
  const std::size_t d = config_.d_model;
  if (position >= config_.max_positions) {
    throw num::DimensionError("decode: prefix exceeds max_positions " + std::to_string(config_.max_positions));
  }
  if (token < 0 || static_cast<std::size_t>(token) >= config_.vocab_size) {
    throw num::DimensionError("decode: token id " + std::to_string(token) + " outside vocabulary");
  }
  auto state = std::make_shared<State>();
  state->parent = parent;
  state->position = position;

  std::vector<const State*> chain;
  for (const State* s = parent.get(); s; s = s->parent.get()) chain.push_back(s);
  std::reverse(chain.begin(), chain.end());
  chain.push_back(state.get());

  std::vector<float> x(d);
  const float* te = params_.token_emb.data().data() + static_cast<std::size_t>(token) * d;
  const float* pe = params_.position_emb.data().data() + position * d;
  for (std::size_t i = 0; i < d; ++i) x[i] = te[i] + pe[i];

  for (std::size_t l = 0; l < params_.decoder.size(); ++l) {
    const auto& L = params_.decoder[l];
    auto h = norm(x, L.ln1_g, L.ln1_b);
    const auto& sa = L.self_attn;
    auto q = affine(h, sa.wq, sa.bq);
    state->keys.push_back(affine(h, sa.wk, sa.bk));
    state->values.push_back(affine(h, sa.wv, sa.bv));
    auto att = attend(
        q, chain.size(), config_.n_heads, [&](std::size_t j) { return chain[j]->keys[l].data(); },
        [&](std::size_t j) { return chain[j]->values[l].data(); });
    add_into(x, affine(att, sa.wo, sa.bo));

    h = norm(x, L.ln2_g, L.ln2_b);
    const auto& ca = L.cross_attn;
    q = affine(h, ca.wq, ca.bq);
    att = attend(
        q, mem_rows_, config_.n_heads, [&](std::size_t j) { return cross_k_[l].data() + j * d; },
        [&](std::size_t j) { return cross_v_[l].data() + j * d; });
    add_into(x, affine(att, ca.wo, ca.bo));

    h = norm(x, L.ln3_g, L.ln3_b);
    auto inner = affine(h, L.ffn.w1, L.ffn.b1);
    for (auto& v : inner) v = k::gelu(v);
    add_into(x, affine(inner, L.ffn.w2, L.ffn.b2));
  }
  x = norm(x, params_.dec_ln_g, params_.dec_ln_b);
  state->logits.resize(config_.vocab_size);
  const float* emb = params_.token_emb.data().data();
  for (std::size_t v = 0; v < config_.vocab_size; ++v) state->logits[v] = k::dot(emb + v * d, x.data(), d);
  num::check_finite<float>("decode_step", state->logits);
  return state;
}

std::shared_ptr<const CachedDecoder::State> CachedDecoder::state_for(std::span<const int> prefix) {
  if (prefix.empty()) throw num::DimensionError("decode: empty prefix (expected bos first)");
  std::vector<int> key(prefix.begin(), prefix.end());
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  std::shared_ptr<const State> parent;
  if (prefix.size() > 1) parent = state_for(prefix.first(prefix.size() - 1));
  auto state = extend(parent, prefix.back(), prefix.size() - 1);
  cache_.emplace(std::move(key), state);
  return state;
}

std::vector<float> CachedDecoder::logits(std::span<const int> prefix) { return state_for(prefix)->logits; }

std::vector<double> CachedDecoder::next_log_probs(std::span<const int> prefix) {
  const auto& lg = state_for(prefix)->logits;
  double mx = -std::numeric_limits<double>::infinity();
  for (float v : lg) mx = std::max(mx, static_cast<double>(v));
  double s = 0.0;
  for (float v : lg) s += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(lg.size());
  for (std::size_t i = 0; i < lg.size(); ++i) out[i] = static_cast<double>(lg[i]) - lse;
  return out;
}

}  // namespace mmb::model
