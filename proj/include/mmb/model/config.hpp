#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mmb/imagefeat/features.hpp"

namespace mmb::model {

enum class Fusion { None, Late, Early };

std::string_view fusion_name(Fusion f);
Fusion parse_fusion(std::string_view name);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 4;
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t d_ffn = 512;
  std::size_t vocab_size = 512;
  std::size_t max_positions = 256;
  Fusion fusion = Fusion::Early;
  img::FeatureKind feature_kind = img::FeatureKind::Region;
  double dropout = 0.0;
  /// Learned position table for image rows (early fusion). Off → image rows are
  /// an unordered set.
  bool image_positions = true;
  /// Late fusion appends one mean-pooled row instead of every feature row.
  bool late_pool = false;

  bool operator==(const ModelConfig&) const = default;

  void validate() const;
  std::size_t image_rows() const;

  /// 2 encoder layers, 24 decoder layers, 2560-d, 32 heads.
  static ModelConfig reference(std::size_t vocab_size);
  /// 2 encoder layers, 4 decoder layers, 128-d, 4 heads.
  static ModelConfig desk(std::size_t vocab_size);
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace mmb::model
