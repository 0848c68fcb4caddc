#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mmb::text {

/// Byte-level BPE vocabulary.
///
/// Id layout: reserved tokens first (pad, bos, eos, unk, then control and
/// marker tokens), then the 256 byte tokens, then one id per learned merge.
/// Control tokens are recognized in text only as whole whitespace-delimited
/// words; pad/bos/eos/unk are never produced by encode().
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  /// Reserved token strings in id order.
  static const std::vector<std::string>& reserved_tokens();
  static int reserved_count() { return static_cast<int>(reserved_tokens().size()); }
  static int byte_id(unsigned char b) { return reserved_count() + b; }

  Vocab();  // bytes only, no merges

  /// Learns merges until the vocabulary holds vocab_size ids in total.
  /// Ties between equally frequent pairs go to the lexicographically smaller
  /// (left, right) byte-string pair.
  static Vocab train(std::span<const std::string> corpus, std::size_t vocab_size);

  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::pair<int, int>>& merges() const { return merges_; }
  bool is_reserved(int id) const { return id >= 0 && id < reserved_count(); }
  /// Id of a control/marker token string, or -1.
  int control_id(std::string_view token) const;

  std::string to_json() const;
  static Vocab from_json(std::string_view json);
  /// FNV-1a over the serialized merges; identifies a vocabulary in checkpoints.
  std::uint64_t hash() const;

 private:
  void add_merge(int left, int right);
  std::vector<int> encode_chunk(std::string_view chunk) const;

  std::vector<std::string> tokens_;
  std::vector<std::pair<int, int>> merges_;
  std::map<std::pair<int, int>, int> merge_rank_;
};

/// Splits text into pre-tokenization chunks (optional leading space plus a run
/// of letters, digits, or punctuation; other whitespace stands alone).
/// Concatenating the chunks reproduces the input.
std::vector<std::string_view> pretokenize(std::string_view text);

}  // namespace mmb::text
