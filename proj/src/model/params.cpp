#include "mmb/model/params.hpp"

#include "mmb/numerics/rng.hpp"

namespace mmb::model {

namespace {

enum class Init { Normal, Zero, One };

struct Entry {
  std::string name;
  num::Shape shape;
  Init init;
};

void attention_entries(std::vector<Entry>& out, const std::string& p, std::size_t d) {
  for (const char* m : {"q", "k", "v", "o"}) {
    out.push_back({p + ".w" + m, {d, d}, Init::Normal});
    out.push_back({p + ".b" + m, {d}, Init::Zero});
  }
}

void norm_entries(std::vector<Entry>& out, const std::string& p, std::size_t d) {
  out.push_back({p + ".g", {d}, Init::One});
  out.push_back({p + ".b", {d}, Init::Zero});
}

void ffn_entries(std::vector<Entry>& out, const std::string& p, std::size_t d, std::size_t f) {
  out.push_back({p + ".w1", {d, f}, Init::Normal});
  out.push_back({p + ".b1", {f}, Init::Zero});
  out.push_back({p + ".w2", {f, d}, Init::Normal});
  out.push_back({p + ".b2", {d}, Init::Zero});
}

std::vector<Entry> entries(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  std::vector<Entry> out;
  out.push_back({"token_emb", {c.vocab_size, d}, Init::Normal});
  out.push_back({"position_emb", {c.max_positions, d}, Init::Normal});
  out.push_back({"image_pos_emb", {img::rows_for(img::FeatureKind::Region), d}, Init::Normal});
  out.push_back({"segment_emb", {2, d}, Init::Normal});
  out.push_back({"image_proj.w", {img::kFeatureDim, d}, Init::Normal});
  out.push_back({"image_proj.b", {d}, Init::Zero});
  for (std::size_t l = 0; l < c.n_enc_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    norm_entries(out, p + ".ln1", d);
    attention_entries(out, p + ".self_attn", d);
    norm_entries(out, p + ".ln2", d);
    ffn_entries(out, p + ".ffn", d, c.d_ffn);
  }
  norm_entries(out, "enc_ln", d);
  for (std::size_t l = 0; l < c.n_dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    norm_entries(out, p + ".ln1", d);
    attention_entries(out, p + ".self_attn", d);
    norm_entries(out, p + ".ln2", d);
    attention_entries(out, p + ".cross_attn", d);
    norm_entries(out, p + ".ln3", d);
    ffn_entries(out, p + ".ffn", d, c.d_ffn);
  }
  norm_entries(out, "dec_ln", d);
  return out;
}

// Visits parameters in manifest order.
template <typename P, typename F>
void visit(P& p, F&& f) {
  auto attn = [&f](const std::string& pre, auto& a) {
    f(pre + ".wq", a.wq); f(pre + ".bq", a.bq);
    f(pre + ".wk", a.wk); f(pre + ".bk", a.bk);
    f(pre + ".wv", a.wv); f(pre + ".bv", a.bv);
    f(pre + ".wo", a.wo); f(pre + ".bo", a.bo);
  };
  auto ffn = [&f](const std::string& pre, auto& m) {
    f(pre + ".w1", m.w1); f(pre + ".b1", m.b1);
    f(pre + ".w2", m.w2); f(pre + ".b2", m.b2);
  };
  f("token_emb", p.token_emb);
  f("position_emb", p.position_emb);
  f("image_pos_emb", p.image_pos_emb);
  f("segment_emb", p.segment_emb);
  f("image_proj.w", p.image_proj_w);
  f("image_proj.b", p.image_proj_b);
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    auto& L = p.encoder[l];
    const std::string pre = "enc." + std::to_string(l);
    f(pre + ".ln1.g", L.ln1_g); f(pre + ".ln1.b", L.ln1_b);
    attn(pre + ".self_attn", L.self_attn);
    f(pre + ".ln2.g", L.ln2_g); f(pre + ".ln2.b", L.ln2_b);
    ffn(pre + ".ffn", L.ffn);
  }
  f("enc_ln.g", p.enc_ln_g);
  f("enc_ln.b", p.enc_ln_b);
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    auto& L = p.decoder[l];
    const std::string pre = "dec." + std::to_string(l);
    f(pre + ".ln1.g", L.ln1_g); f(pre + ".ln1.b", L.ln1_b);
    attn(pre + ".self_attn", L.self_attn);
    f(pre + ".ln2.g", L.ln2_g); f(pre + ".ln2.b", L.ln2_b);
    attn(pre + ".cross_attn", L.cross_attn);
    f(pre + ".ln3.g", L.ln3_g); f(pre + ".ln3.b", L.ln3_b);
    ffn(pre + ".ffn", L.ffn);
  }
  f("dec_ln.g", p.dec_ln_g);
  f("dec_ln.b", p.dec_ln_b);
}

template <typename T>
ModelParams<T> skeleton(const ModelConfig& c) {
  ModelParams<T> p;
  p.encoder.resize(c.n_enc_layers);
  p.decoder.resize(c.n_dec_layers);
  return p;
}

template <typename T>
ModelParams<T> assemble(const ModelConfig& config, std::vector<std::vector<T>> values) {
  auto manifest = entries(config);
  if (values.size() != manifest.size()) {
    throw ConfigError("expected " + std::to_string(manifest.size()) + " parameter tensors, got " +
                      std::to_string(values.size()));
  }
  auto p = skeleton<T>(config);
  std::size_t i = 0;
  visit(p, [&](const std::string& name, num::Tensor<T>& t) {
    if (name != manifest[i].name) throw ConfigError("parameter order mismatch at " + name);
    t = num::Tensor<T>::parameter(manifest[i].shape, std::move(values[i]));
    ++i;
  });
  return p;
}

}  // namespace

std::vector<std::pair<std::string, num::Shape>> parameter_manifest(const ModelConfig& config) {
  std::vector<std::pair<std::string, num::Shape>> out;
  for (auto& e : entries(config)) out.emplace_back(std::move(e.name), std::move(e.shape));
  return out;
}

template <typename T>
std::vector<std::pair<std::string, num::Tensor<T>*>> ModelParams<T>::named() {
  std::vector<std::pair<std::string, num::Tensor<T>*>> out;
  visit(*this, [&out](const std::string& n, num::Tensor<T>& t) { out.emplace_back(n, &t); });
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const num::Tensor<T>*>> ModelParams<T>::named() const {
  std::vector<std::pair<std::string, const num::Tensor<T>*>> out;
  visit(*this, [&out](const std::string& n, const num::Tensor<T>& t) { out.emplace_back(n, &t); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->numel();
  return n;
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (auto& [name, t] : named()) t->zero_grad();
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
  return cast<T>();
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.encoder.resize(encoder.size());
  out.decoder.resize(decoder.size());
  auto src = named();
  std::size_t i = 0;
  visit(out, [&](const std::string&, num::Tensor<U>& t) {
    const auto* s = src[i++].second;
    t = num::Tensor<U>::parameter(s->shape(), std::vector<U>(s->data().begin(), s->data().end()));
  });
  return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  num::SplitMix64 rng(seed);
  std::vector<std::vector<T>> values;
  for (const auto& e : entries(config)) {
    std::vector<T> v(num::shape_numel(e.shape));
    switch (e.init) {
      case Init::Normal:
        for (auto& x : v) x = static_cast<T>(0.02 * rng.normal());
        break;
      case Init::Zero: break;
      case Init::One: std::fill(v.begin(), v.end(), T(1)); break;
    }
    values.push_back(std::move(v));
  }
  return assemble<T>(config, std::move(values));
}

template <typename T>
ModelParams<T> params_from_values(const ModelConfig& config,
                                  std::vector<std::vector<float>> values_in_manifest_order) {
  std::vector<std::vector<T>> converted;
  converted.reserve(values_in_manifest_order.size());
  auto manifest = entries(config);
  for (std::size_t i = 0; i < values_in_manifest_order.size(); ++i) {
    auto& v = values_in_manifest_order[i];
    if (i < manifest.size() && v.size() != num::shape_numel(manifest[i].shape)) {
      throw ConfigError("parameter " + manifest[i].name + " has " + std::to_string(v.size()) +
                        " values, expected " + num::shape_str(manifest[i].shape));
    }
    converted.emplace_back(v.begin(), v.end());
  }
  return assemble<T>(config, std::move(converted));
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> init_params<float>(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_params<double>(const ModelConfig&, std::uint64_t);
template ModelParams<float> params_from_values<float>(const ModelConfig&, std::vector<std::vector<float>>);
template ModelParams<double> params_from_values<double>(const ModelConfig&, std::vector<std::vector<float>>);

}  // namespace mmb::model
