#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "mmb/model/config.hpp"
#include "mmb/model/params.hpp"

namespace mmb::model {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On disk: "MMBCKPT1", u64 LE header length, JSON header, f32 LE blob.
/// The header carries the config, the vocabulary (and its hash), a parameter
/// manifest with shapes and byte offsets, and a provenance array.
struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
  std::string vocab_json;
  nlohmann::json provenance = nlohmann::json::array();
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Loads and validates every shape against the stored config. With `expected`,
/// also rejects a checkpoint whose config differs.
Checkpoint load_checkpoint(const std::string& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

/// Content hash of a saved checkpoint file (hex), used in provenance chains.
std::string file_hash(const std::string& path);

}  // namespace mmb::model
