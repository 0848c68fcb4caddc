#include "mmb/model/transformer.hpp"

#include "mmb/numerics/rng.hpp"
#include "mmb/textdata/vocab.hpp"

namespace mmb::model {

namespace {

using num::Tensor;

// Hands out a distinct dropout seed per call site within one forward pass.
class DropoutStream {
 public:
  DropoutStream(const ModelConfig& c, const ForwardOptions& o)
      : p_(o.train ? c.dropout : 0.0), seed_(o.seed) {}

  template <typename T>
  Tensor<T> operator()(const Tensor<T>& x) {
    if (p_ <= 0.0) return x;
    return num::dropout(x, p_, num::mix_seed(seed_, counter_++));
  }

 private:
  double p_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

template <typename T>
Tensor<T> rows_of(const Tensor<T>& table, std::size_t row, std::size_t count) {
  std::vector<std::size_t> idx(count, row);
  return num::gather_rows(table, idx);
}

template <typename T>
Tensor<T> project_attention(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return num::linear(x, w, b);
}

template <typename T>
Tensor<T> feed_forward(const FeedForwardWeights<T>& f, const Tensor<T>& x) {
  return num::linear(num::gelu(num::linear(x, f.w1, f.b1)), f.w2, f.b2);
}

template <typename T>
Tensor<T> encoder_stack(const ModelParams<T>& p, const ModelConfig& c, Tensor<T> x,
                        std::size_t batch, std::size_t len, const std::vector<std::uint8_t>& mask,
                        DropoutStream& drop) {
  num::AttentionLayout lay{batch, len, len, c.n_heads, mask, false};
  for (const auto& L : p.encoder) {
    auto h = num::layer_norm(x, L.ln1_g, L.ln1_b);
    const auto& a = L.self_attn;
    auto att = num::attention(project_attention(h, a.wq, a.bq), project_attention(h, a.wk, a.bk),
                              project_attention(h, a.wv, a.bv), lay);
    x = num::add(x, drop(num::linear(att, a.wo, a.bo)));
    h = num::layer_norm(x, L.ln2_g, L.ln2_b);
    x = num::add(x, drop(feed_forward(L.ffn, h)));
  }
  return num::layer_norm(x, p.enc_ln_g, p.enc_ln_b);
}

}  // namespace

template <typename T>
EncoderOutput<T> encode(const ModelParams<T>& params, const ModelConfig& config,
                        const text::Batch& batch, const ForwardOptions& options) {
  const std::size_t B = batch.batch, S = batch.src_len, d = config.d_model;
  if (S > config.max_positions) {
    throw num::DimensionError("encode: source length " + std::to_string(S) + " exceeds max_positions " +
                              std::to_string(config.max_positions));
  }
  DropoutStream drop(config, options);

  std::vector<std::size_t> tok_idx(B * S), pos_idx(B * S);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t s = 0; s < S; ++s) {
      const int id = batch.input(b, s);
      if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
        throw num::DimensionError("encode: token id " + std::to_string(id) + " outside vocabulary");
      }
      tok_idx[b * S + s] = static_cast<std::size_t>(id);
      pos_idx[b * S + s] = s;
    }
  auto text = num::add(num::add(num::gather_rows(params.token_emb, tok_idx),
                                num::gather_rows(params.position_emb, pos_idx)),
                       rows_of(params.segment_emb, 0, B * S));
  text = drop(text);

  const bool use_images = config.fusion != Fusion::None && batch.has_images();
  EncoderOutput<T> out;
  out.batch = B;

  if (!use_images) {
    out.memory = encoder_stack(params, config, text, B, S, batch.input_mask, drop);
    out.memory_mask = batch.input_mask;
    out.mem_len = out.enc_len = S;
    return out;
  }

  // Project every present image; absent ones point at a masked zero row.
  std::vector<const img::ImageFeatures*> present;
  std::vector<long> slot(B, -1);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& im = batch.images[b];
    if (!im) continue;
    if (im->kind != config.feature_kind) {
      throw ConfigError("encode: image '" + im->image_id + "' has " + std::string(img::kind_name(im->kind)) +
                        " features but the model expects " +
                        std::string(img::kind_name(config.feature_kind)));
    }
    slot[b] = static_cast<long>(present.size());
    present.push_back(im.get());
  }
  const std::size_t R = config.image_rows();
  const std::size_t P = present.size();
  Tensor<T> feats;
  if (config.fusion == Fusion::Late && config.late_pool) {
    const std::size_t rows = img::rows_for(config.feature_kind);
    std::vector<T> pooled(P * img::kFeatureDim, T(0));
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < img::kFeatureDim; ++j)
          pooled[i * img::kFeatureDim + j] += present[i]->matrix[r * img::kFeatureDim + j] / static_cast<T>(rows);
    feats = Tensor<T>::constant({P, img::kFeatureDim}, std::move(pooled));
  } else {
    feats = img::feature_tensor<T>(present);
  }
  auto image = num::linear(feats, params.image_proj_w, params.image_proj_b);  // [P·R × d]
  const auto zero_row = Tensor<T>::zeros({1, d});

  if (config.fusion == Fusion::Early) {
    if (config.image_positions) {
      std::vector<std::size_t> ipos(P * R);
      for (std::size_t i = 0; i < P * R; ++i) ipos[i] = i % R;
      image = num::add(image, num::gather_rows(params.image_pos_emb, ipos));
    }
    image = num::add(image, rows_of(params.segment_emb, 1, P * R));
    image = drop(image);
    auto table = num::concat_rows(num::concat_rows(image, zero_row), text);
    const std::size_t zero = P * R, text_base = P * R + 1, L = R + S;
    std::vector<std::size_t> idx(B * L);
    std::vector<std::uint8_t> mask(B * L);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t r = 0; r < R; ++r) {
        idx[b * L + r] = slot[b] >= 0 ? static_cast<std::size_t>(slot[b]) * R + r : zero;
        mask[b * L + r] = slot[b] >= 0;
      }
      for (std::size_t s = 0; s < S; ++s) {
        idx[b * L + R + s] = text_base + b * S + s;
        mask[b * L + R + s] = batch.input_mask[b * S + s];
      }
    }
    out.memory = encoder_stack(params, config, num::gather_rows(table, idx), B, L, mask, drop);
    out.memory_mask = std::move(mask);
    out.mem_len = out.enc_len = L;
    return out;
  }

  // Late fusion.
  auto enc = encoder_stack(params, config, text, B, S, batch.input_mask, drop);
  auto table = num::concat_rows(enc, num::concat_rows(image, zero_row));
  const std::size_t image_base = B * S, zero = B * S + P * R, L = S + R;
  std::vector<std::size_t> idx(B * L);
  std::vector<std::uint8_t> mask(B * L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < S; ++s) {
      idx[b * L + s] = b * S + s;
      mask[b * L + s] = batch.input_mask[b * S + s];
    }
    for (std::size_t r = 0; r < R; ++r) {
      idx[b * L + S + r] = slot[b] >= 0 ? image_base + static_cast<std::size_t>(slot[b]) * R + r : zero;
      mask[b * L + S + r] = slot[b] >= 0;
    }
  }
  out.memory = num::gather_rows(table, idx);
  out.memory_mask = std::move(mask);
  out.mem_len = L;
  out.enc_len = S;
  return out;
}

template <typename T>
Tensor<T> decode_logits(const ModelParams<T>& params, const ModelConfig& config,
                        const EncoderOutput<T>& memory, const std::vector<int>& decoder_inputs,
                        std::size_t len, const ForwardOptions& options) {
  const std::size_t B = memory.batch;
  if (len == 0 || decoder_inputs.size() != B * len) {
    throw num::DimensionError("decode_logits: expected " + std::to_string(B) + " x " + std::to_string(len) +
                              " decoder inputs");
  }
  if (len > config.max_positions) {
    throw num::DimensionError("decode_logits: prefix length " + std::to_string(len) +
                              " exceeds max_positions " + std::to_string(config.max_positions));
  }
  DropoutStream drop(config, options);
  // Keep decoder dropout masks independent of the encoder's.
  if (options.train) drop = DropoutStream(config, {true, num::mix_seed(options.seed, 0xDEC0DE)});

  std::vector<std::size_t> tok_idx(B * len), pos_idx(B * len);
  for (std::size_t i = 0; i < B * len; ++i) {
    const int id = decoder_inputs[i];
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw num::DimensionError("decode_logits: token id " + std::to_string(id) + " outside vocabulary");
    }
    tok_idx[i] = static_cast<std::size_t>(id);
    pos_idx[i] = i % len;
  }
  auto y = drop(num::add(num::gather_rows(params.token_emb, tok_idx),
                         num::gather_rows(params.position_emb, pos_idx)));

  num::AttentionLayout self_lay{B, len, len, config.n_heads, {}, true};
  num::AttentionLayout cross_lay{B, len, memory.mem_len, config.n_heads, memory.memory_mask, false};
  for (const auto& L : params.decoder) {
    auto h = num::layer_norm(y, L.ln1_g, L.ln1_b);
    const auto& sa = L.self_attn;
    auto att = num::attention(num::linear(h, sa.wq, sa.bq), num::linear(h, sa.wk, sa.bk),
                              num::linear(h, sa.wv, sa.bv), self_lay);
    y = num::add(y, drop(num::linear(att, sa.wo, sa.bo)));

    h = num::layer_norm(y, L.ln2_g, L.ln2_b);
    const auto& ca = L.cross_attn;
    att = num::attention(num::linear(h, ca.wq, ca.bq), num::linear(memory.memory, ca.wk, ca.bk),
                         num::linear(memory.memory, ca.wv, ca.bv), cross_lay);
    y = num::add(y, drop(num::linear(att, ca.wo, ca.bo)));

    h = num::layer_norm(y, L.ln3_g, L.ln3_b);
    y = num::add(y, drop(feed_forward(L.ffn, h)));
  }
  y = num::layer_norm(y, params.dec_ln_g, params.dec_ln_b);
  return num::matmul_bt(y, params.token_emb);
}

template <typename T>
LossOutput<T> forward_loss(const ModelParams<T>& params, const ModelConfig& config,
                           const text::Batch& batch, const ForwardOptions& options) {
  if (batch.tgt_len < 2) throw num::DimensionError("forward_loss: targets need bos and eos");
  auto memory = encode(params, config, batch, options);
  const std::size_t B = batch.batch, len = batch.tgt_len - 1;
  std::vector<int> inputs(B * len), labels(B * len);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < len; ++t) {
      inputs[b * len + t] = batch.target(b, t);
      labels[b * len + t] = batch.target_mask[b * batch.tgt_len + t + 1] ? batch.target(b, t + 1)
                                                                          : text::Vocab::kPad;
    }
  auto logits = decode_logits(params, config, memory, inputs, len, options);
  auto ce = num::cross_entropy(logits, labels, text::Vocab::kPad);
  return {ce.loss, ce.tokens, ce.nll_sum};
}

#define MMB_INSTANTIATE_MODEL(T)                                                                  \
  template EncoderOutput<T> encode<T>(const ModelParams<T>&, const ModelConfig&, const text::Batch&, \
                                      const ForwardOptions&);                                       \
  template Tensor<T> decode_logits<T>(const ModelParams<T>&, const ModelConfig&,                    \
                                      const EncoderOutput<T>&, const std::vector<int>&, std::size_t, \
                                      const ForwardOptions&);                                       \
  template LossOutput<T> forward_loss<T>(const ModelParams<T>&, const ModelConfig&,                 \
                                         const text::Batch&, const ForwardOptions&);

MMB_INSTANTIATE_MODEL(float)
MMB_INSTANTIATE_MODEL(double)

}  // namespace mmb::model
