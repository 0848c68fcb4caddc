#include "mmb/imagefeat/features.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <utility>

#include "mmb/numerics/rng.hpp"

namespace mmb::img {

static_assert(std::endian::native == std::endian::little, "feature I/O assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'M', 'M', 'F', 'E', 'A', 'T', '0', '1'};
constexpr char kIndexMagic[8] = {'M', 'M', 'F', 'I', 'D', 'X', '0', '1'};
constexpr std::size_t kHeaderSize = 8 + 1 + 4;

template <typename U>
void put(std::string& buf, U value) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  buf.append(bytes, sizeof(U));
}

bool pread_exact(int fd, void* dst, std::size_t n, std::uint64_t offset) {
  auto* p = static_cast<char*>(dst);
  while (n > 0) {
    const ssize_t got = ::pread(fd, p, n, static_cast<off_t>(offset));
    if (got <= 0) return false;
    p += got;
    n -= static_cast<std::size_t>(got);
    offset += static_cast<std::uint64_t>(got);
  }
  return true;
}
}  // namespace

std::size_t rows_for(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::Global: return 1;
    case FeatureKind::Spatial: return 49;
    case FeatureKind::Region: return 100;
  }
  throw std::invalid_argument("unknown feature kind");
}

std::string_view kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::Global: return "global";
    case FeatureKind::Spatial: return "spatial";
    case FeatureKind::Region: return "region";
  }
  return "unknown";
}

FeatureKind parse_kind(std::string_view name) {
  if (name == "global") return FeatureKind::Global;
  if (name == "spatial") return FeatureKind::Spatial;
  if (name == "region") return FeatureKind::Region;
  throw std::invalid_argument("unknown feature kind '" + std::string(name) + "'");
}

void validate(const ImageFeatures& feats) {
  if (feats.matrix.size() != feats.rows() * kFeatureDim) {
    throw std::invalid_argument("image " + feats.image_id + ": expected " +
                                std::to_string(feats.rows()) + "x2048 features");
  }
  for (float v : feats.matrix)
    if (!std::isfinite(v)) throw std::invalid_argument("image " + feats.image_id + ": non-finite feature");
}

ImageFeatures synth_features(std::string_view image_id, FeatureKind kind, std::uint64_t seed) {
  ImageFeatures f{kind, std::string(image_id), {}};
  f.matrix.resize(rows_for(kind) * kFeatureDim);
  num::SplitMix64 rng(num::mix_seed(num::fnv1a64(image_id), seed));
  for (auto& v : f.matrix) {
    // 24 random bits → exactly representable float in [-1, 1).
    const auto bits = static_cast<std::int32_t>(rng.next() >> 40);
    v = static_cast<float>(bits) * 0x1.0p-23f - 1.0f;
  }
  return f;
}

void write_feature_file(const std::string& path, FeatureKind kind,
                        std::span<const ImageFeatures> entries) {
  std::string buf(kMagic, 8);
  put<std::uint8_t>(buf, static_cast<std::uint8_t>(kind));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.kind != kind) throw std::invalid_argument("write_feature_file: mixed feature kinds");
    validate(e);
    if (e.image_id.size() > 0xFFFF) throw std::invalid_argument("write_feature_file: id too long");
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(e.image_id.size()));
    buf += e.image_id;
    buf.append(reinterpret_cast<const char*>(e.matrix.data()), e.matrix.size() * sizeof(float));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write feature file " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("short write to " + path);
  out.close();
  std::remove((path + ".idx").c_str());
}

FeatureStore::FeatureStore(FeatureStore&& o) noexcept { *this = std::move(o); }

FeatureStore& FeatureStore::operator=(FeatureStore&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(o.path_);
    fd_ = std::exchange(o.fd_, -1);
    file_size_ = o.file_size_;
    kind_ = o.kind_;
    ids_ = std::move(o.ids_);
    offsets_ = std::move(o.offsets_);
  }
  return *this;
}

FeatureStore::~FeatureStore() {
  if (fd_ >= 0) ::close(fd_);
}

FeatureStore FeatureStore::open(const std::string& path) {
  FeatureStore s;
  s.path_ = path;
  s.fd_ = ::open(path.c_str(), O_RDONLY);
  if (s.fd_ < 0) throw std::runtime_error("cannot open feature file " + path);
  struct stat st {};
  ::fstat(s.fd_, &st);
  s.file_size_ = static_cast<std::uint64_t>(st.st_size);

  char header[kHeaderSize];
  if (!pread_exact(s.fd_, header, kHeaderSize, 0)) {
    throw FeatureFormatError(path + ": truncated header at offset 0");
  }
  if (std::memcmp(header, kMagic, 8) != 0) throw FeatureFormatError(path + ": bad magic");
  const auto kind_byte = static_cast<std::uint8_t>(header[8]);
  if (kind_byte > 2) {
    throw FeatureFormatError(path + ": unknown feature kind byte " + std::to_string(kind_byte));
  }
  s.kind_ = static_cast<FeatureKind>(kind_byte);

  const std::string idx_path = path + ".idx";
  if (!s.read_sidecar(idx_path)) {
    s.build_index();
    s.write_sidecar(idx_path);
  }
  return s;
}

void FeatureStore::build_index() {
  std::uint32_t count = 0;
  char header[kHeaderSize];
  pread_exact(fd_, header, kHeaderSize, 0);
  std::memcpy(&count, header + 9, 4);
  const std::uint64_t payload = rows_for(kind_) * kFeatureDim * sizeof(float);
  std::uint64_t offset = kHeaderSize;
  ids_.clear();
  offsets_.clear();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t len = 0;
    if (!pread_exact(fd_, &len, 2, offset)) {
      throw FeatureFormatError(path_ + ": truncated entry header at offset " + std::to_string(offset));
    }
    std::string id(len, '\0');
    if (len && !pread_exact(fd_, id.data(), len, offset + 2)) {
      throw FeatureFormatError(path_ + ": truncated image id at offset " + std::to_string(offset + 2));
    }
    const std::uint64_t data_offset = offset + 2 + len;
    if (data_offset + payload > file_size_) {
      throw FeatureFormatError(path_ + ": truncated feature payload at offset " +
                               std::to_string(data_offset));
    }
    if (!offsets_.emplace(id, data_offset).second) {
      throw FeatureFormatError(path_ + ": duplicate image id '" + id + "'");
    }
    ids_.push_back(std::move(id));
    offset = data_offset + payload;
  }
}

bool FeatureStore::read_sidecar(const std::string& idx_path) {
  std::ifstream in(idx_path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  std::uint64_t size = 0;
  std::uint32_t count = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kIndexMagic, 8) != 0) return false;
  if (!in.read(reinterpret_cast<char*>(&size), 8) || size != file_size_) return false;
  if (!in.read(reinterpret_cast<char*>(&count), 4)) return false;
  const std::uint64_t payload = rows_for(kind_) * kFeatureDim * sizeof(float);
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::uint64_t> offsets;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t len = 0;
    std::uint64_t off = 0;
    if (!in.read(reinterpret_cast<char*>(&len), 2)) return false;
    std::string id(len, '\0');
    if (!in.read(id.data(), len) || !in.read(reinterpret_cast<char*>(&off), 8)) return false;
    if (off + payload > file_size_) return false;
    offsets.emplace(id, off);
    ids.push_back(std::move(id));
  }
  ids_ = std::move(ids);
  offsets_ = std::move(offsets);
  return true;
}

void FeatureStore::write_sidecar(const std::string& idx_path) const {
  std::string buf(kIndexMagic, 8);
  put<std::uint64_t>(buf, file_size_);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(ids_.size()));
  for (const auto& id : ids_) {
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(id.size()));
    buf += id;
    put<std::uint64_t>(buf, offsets_.at(id));
  }
  // A read-only location just means the index is rebuilt next time.
  std::ofstream out(idx_path, std::ios::binary | std::ios::trunc);
  if (out) out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

ImageFeatures FeatureStore::load(std::string_view id) const {
  auto it = offsets_.find(std::string(id));
  if (it == offsets_.end()) throw FeatureNotFound("image '" + std::string(id) + "' not in " + path_);
  ImageFeatures f{kind_, std::string(id), {}};
  f.matrix.resize(rows_for(kind_) * kFeatureDim);
  if (!pread_exact(fd_, f.matrix.data(), f.matrix.size() * sizeof(float), it->second)) {
    throw FeatureFormatError(path_ + ": truncated feature payload at offset " +
                             std::to_string(it->second));
  }
  return f;
}

template <typename T>
num::Tensor<T> feature_tensor(std::span<const ImageFeatures* const> feats) {
  if (feats.empty()) throw num::DimensionError("feature_tensor: no features");
  std::size_t rows = 0;
  for (const auto* f : feats) rows += f->rows();
  std::vector<T> values;
  values.reserve(rows * kFeatureDim);
  for (const auto* f : feats) {
    if (f->matrix.size() != f->rows() * kFeatureDim) {
      throw num::DimensionError("feature_tensor: malformed feature matrix for " + f->image_id);
    }
    values.insert(values.end(), f->matrix.begin(), f->matrix.end());
  }
  return num::Tensor<T>::constant({rows, kFeatureDim}, std::move(values));
}

template <typename T>
num::Tensor<T> project(const ImageFeatures& feats, const num::Tensor<T>& weight,
                       const num::Tensor<T>& bias) {
  if (weight.rank() != 2 || weight.dim(0) != kFeatureDim) {
    throw num::DimensionError("project: weight must be 2048 x d, got " + num::shape_str(weight.shape()));
  }
  const ImageFeatures* one[] = {&feats};
  return num::linear(feature_tensor<T>(one), weight, bias);
}

template num::Tensor<float> feature_tensor<float>(std::span<const ImageFeatures* const>);
template num::Tensor<double> feature_tensor<double>(std::span<const ImageFeatures* const>);
template num::Tensor<float> project<float>(const ImageFeatures&, const num::Tensor<float>&,
                                           const num::Tensor<float>&);
template num::Tensor<double> project<double>(const ImageFeatures&, const num::Tensor<double>&,
                                             const num::Tensor<double>&);

}  // namespace mmb::img
