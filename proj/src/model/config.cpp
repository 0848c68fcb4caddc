#include "mmb/model/config.hpp"

namespace mmb::model {

std::string_view fusion_name(Fusion f) {
  switch (f) {
    case Fusion::None: return "none";
    case Fusion::Late: return "late";
    case Fusion::Early: return "early";
  }
  return "unknown";
}

Fusion parse_fusion(std::string_view name) {
  if (name == "none") return Fusion::None;
  if (name == "late") return Fusion::Late;
  if (name == "early") return Fusion::Early;
  throw ConfigError("unknown fusion mode '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (n_enc_layers == 0 || n_dec_layers == 0) throw ConfigError("layer counts must be positive");
  if (d_ffn == 0 || vocab_size < 3 || max_positions == 0) {
    throw ConfigError("d_ffn, vocab_size and max_positions must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

std::size_t ModelConfig::image_rows() const {
  if (fusion == Fusion::Late && late_pool) return 1;
  return img::rows_for(feature_kind);
}

ModelConfig ModelConfig::reference(std::size_t vocab_size) {
  ModelConfig c;
  c.n_enc_layers = 2;
  c.n_dec_layers = 24;
  c.d_model = 2560;
  c.n_heads = 32;
  c.d_ffn = 10240;
  c.vocab_size = vocab_size;
  c.max_positions = 128;
  return c;
}

ModelConfig ModelConfig::desk(std::size_t vocab_size) {
  ModelConfig c;
  c.n_enc_layers = 2;
  c.n_dec_layers = 4;
  c.d_model = 128;
  c.n_heads = 4;
  c.d_ffn = 512;
  c.vocab_size = vocab_size;
  c.max_positions = 256;
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"n_enc_layers", c.n_enc_layers},
          {"n_dec_layers", c.n_dec_layers},
          {"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"d_ffn", c.d_ffn},
          {"vocab_size", c.vocab_size},
          {"max_positions", c.max_positions},
          {"fusion", fusion_name(c.fusion)},
          {"feature_kind", img::kind_name(c.feature_kind)},
          {"dropout", c.dropout},
          {"image_positions", c.image_positions},
          {"late_pool", c.late_pool}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_enc_layers = j.value("n_enc_layers", c.n_enc_layers);
  c.n_dec_layers = j.value("n_dec_layers", c.n_dec_layers);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ffn = j.value("d_ffn", c.d_ffn);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_positions = j.value("max_positions", c.max_positions);
  if (j.contains("fusion")) c.fusion = parse_fusion(j["fusion"].get<std::string>());
  if (j.contains("feature_kind")) c.feature_kind = img::parse_kind(j["feature_kind"].get<std::string>());
  c.dropout = j.value("dropout", c.dropout);
  c.image_positions = j.value("image_positions", c.image_positions);
  c.late_pool = j.value("late_pool", c.late_pool);
  c.validate();
  return c;
}

}  // namespace mmb::model
