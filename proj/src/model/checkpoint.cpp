#include "mmb/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mmb/numerics/rng.hpp"
#include "mmb/textdata/vocab.hpp"

namespace mmb::model {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'M', 'M', 'B', 'C', 'K', 'P', 'T', '1'};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ckpt.config.validate();
  nlohmann::json header;
  header["format"] = "mmb-checkpoint-1";
  header["config"] = to_json(ckpt.config);
  header["vocab"] = ckpt.vocab_json;
  header["vocab_hash"] = hex64(num::fnv1a64(ckpt.vocab_json));
  header["provenance"] = ckpt.provenance;

  auto manifest = nlohmann::json::array();
  std::string blob;
  for (const auto& [name, t] : ckpt.params.named()) {
    const std::size_t bytes = t->numel() * sizeof(float);
    manifest.push_back({{"name", name}, {"shape", t->shape()}, {"offset", blob.size()}, {"bytes", bytes}});
    blob.append(reinterpret_cast<const char*>(t->data().data()), bytes);
  }
  header["parameters"] = std::move(manifest);
  header["blob_bytes"] = blob.size();
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  const std::uint64_t len = header_text.size();
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(header_text.data(), static_cast<std::streamsize>(len));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw CheckpointError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected) {
  const std::string bytes = read_all(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw CheckpointError(path + ": not a checkpoint (bad magic)");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (len > bytes.size() - 16) throw CheckpointError(path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": malformed header: " + e.what());
  }
  if (header.value("format", "") != "mmb-checkpoint-1") throw CheckpointError(path + ": unknown format");

  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(header.at("config"));
  } catch (const std::exception& e) {
    throw CheckpointError(path + ": invalid config: " + e.what());
  }
  if (expected && !(*expected == ckpt.config)) {
    throw CheckpointError(path + ": checkpoint config " + to_json(ckpt.config).dump() +
                          " does not match expected " + to_json(*expected).dump());
  }
  ckpt.vocab_json = header.at("vocab").get<std::string>();
  if (header.at("vocab_hash").get<std::string>() != hex64(num::fnv1a64(ckpt.vocab_json))) {
    throw CheckpointError(path + ": vocabulary hash mismatch");
  }
  ckpt.provenance = header.value("provenance", nlohmann::json::array());

  const std::size_t blob_start = 16 + len;
  const std::size_t blob_bytes = header.at("blob_bytes").get<std::size_t>();
  if (bytes.size() - blob_start != blob_bytes) {
    throw CheckpointError(path + ": blob is " + std::to_string(bytes.size() - blob_start) +
                          " bytes, header declares " + std::to_string(blob_bytes));
  }

  const auto manifest = parameter_manifest(ckpt.config);
  const auto& stored = header.at("parameters");
  if (stored.size() != manifest.size()) {
    throw CheckpointError(path + ": " + std::to_string(stored.size()) + " parameters, config needs " +
                          std::to_string(manifest.size()));
  }
  std::vector<std::vector<float>> values;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& entry = stored[i];
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<num::Shape>();
    if (name != manifest[i].first || shape != manifest[i].second) {
      throw CheckpointError(path + ": parameter " + name + " " + num::shape_str(shape) +
                            " does not match config entry " + manifest[i].first + " " +
                            num::shape_str(manifest[i].second));
    }
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t nbytes = entry.at("bytes").get<std::size_t>();
    if (nbytes != num::shape_numel(shape) * sizeof(float) || offset + nbytes > blob_bytes) {
      throw CheckpointError(path + ": parameter " + name + " has an invalid byte range");
    }
    std::vector<float> v(num::shape_numel(shape));
    std::memcpy(v.data(), bytes.data() + blob_start + offset, nbytes);
    values.push_back(std::move(v));
  }
  ckpt.params = params_from_values<float>(ckpt.config, std::move(values));
  for (const auto& [name, t] : ckpt.params.named()) num::check_finite<float>(name.c_str(), t->data());
  return ckpt;
}

std::string file_hash(const std::string& path) { return hex64(num::fnv1a64(read_all(path))); }

}  // namespace mmb::model
