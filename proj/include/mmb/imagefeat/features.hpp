#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmb/numerics/ops.hpp"

namespace mmb::img {

inline constexpr std::size_t kFeatureDim = 2048;

/// Global: one pooled vector. Spatial: 7×7 grid flattened row-major to 49 rows.
/// Region: 100 detector boxes.
enum class FeatureKind : std::uint8_t { Global = 0, Spatial = 1, Region = 2 };

std::size_t rows_for(FeatureKind kind);
std::string_view kind_name(FeatureKind kind);
FeatureKind parse_kind(std::string_view name);

struct ImageFeatures {
  FeatureKind kind = FeatureKind::Global;
  std::string image_id;
  std::vector<float> matrix;  // rows_for(kind) × kFeatureDim, row-major

  std::size_t rows() const { return rows_for(kind); }
};

/// Throws std::invalid_argument if the matrix size or any value is off-contract.
void validate(const ImageFeatures& feats);

class FeatureFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FeatureNotFound : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Deterministic stand-in for an image encoder: values uniform in [-1, 1),
/// derived from integer hashing of (image_id, seed) only.
ImageFeatures synth_features(std::string_view image_id, FeatureKind kind, std::uint64_t seed);

/// Writes the feature file: "MMFEAT01", u8 kind, u32 LE count, then per entry
/// u16 LE id length, id bytes, rows×2048 LE f32. All entries must share one kind.
void write_feature_file(const std::string& path, FeatureKind kind,
                        std::span<const ImageFeatures> entries);

/// Read-only view of a feature file. Safe for concurrent readers.
class FeatureStore {
 public:
  /// Opens the file and loads "<path>.idx", rebuilding it when absent or stale.
  static FeatureStore open(const std::string& path);

  FeatureStore(FeatureStore&&) noexcept;
  FeatureStore& operator=(FeatureStore&&) noexcept;
  FeatureStore(const FeatureStore&) = delete;
  FeatureStore& operator=(const FeatureStore&) = delete;
  ~FeatureStore();

  FeatureKind kind() const { return kind_; }
  /// Ids in file order.
  const std::vector<std::string>& ids() const { return ids_; }
  bool contains(std::string_view id) const { return offsets_.count(std::string(id)) != 0; }
  ImageFeatures load(std::string_view id) const;
  const std::string& path() const { return path_; }

 private:
  FeatureStore() = default;
  void build_index();
  bool read_sidecar(const std::string& idx_path);
  void write_sidecar(const std::string& idx_path) const;

  std::string path_;
  int fd_ = -1;
  std::uint64_t file_size_ = 0;
  FeatureKind kind_ = FeatureKind::Global;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint64_t> offsets_;  // offset of the f32 payload
};

/// Frozen features as a constant (non-differentiable) [rows × 2048] tensor.
template <typename T>
num::Tensor<T> feature_tensor(std::span<const ImageFeatures* const> feats);

/// Affine map of every feature row into the model width: feats · W + b.
/// W and b take part in the tape; the features never receive a gradient.
template <typename T>
num::Tensor<T> project(const ImageFeatures& feats, const num::Tensor<T>& weight,
                       const num::Tensor<T>& bias);

}  // namespace mmb::img
