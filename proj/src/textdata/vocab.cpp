#include "mmb/textdata/vocab.hpp"

#include <algorithm>
#include <stdexcept>

#include "json.hpp"
#include "mmb/numerics/rng.hpp"

namespace mmb::text {

namespace {

enum class CharClass { Space, OtherWs, Letter, Digit, Punct };

CharClass classify(unsigned char c) {
  if (c == ' ') return CharClass::Space;
  if (c == '\n' || c == '\t' || c == '\r' || c == '\v' || c == '\f') return CharClass::OtherWs;
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80) return CharClass::Letter;
  if (c >= '0' && c <= '9') return CharClass::Digit;
  return CharClass::Punct;
}

bool is_ws(unsigned char c) {
  auto k = classify(c);
  return k == CharClass::Space || k == CharClass::OtherWs;
}

// Piece of text: either a control token id (>= 0) or plain text.
struct Piece {
  int control = -1;
  std::string_view text;
};

std::vector<Piece> split_controls(std::string_view text, const Vocab& vocab) {
  std::vector<Piece> pieces;
  std::size_t plain_start = 0, i = 0;
  while (i < text.size()) {
    const bool word_start = i == 0 || is_ws(static_cast<unsigned char>(text[i - 1]));
    if (word_start && !is_ws(static_cast<unsigned char>(text[i]))) {
      std::size_t end = i;
      while (end < text.size() && !is_ws(static_cast<unsigned char>(text[end]))) ++end;
      const int id = vocab.control_id(text.substr(i, end - i));
      if (id >= 0) {
        if (i > plain_start) pieces.push_back({-1, text.substr(plain_start, i - plain_start)});
        pieces.push_back({id, text.substr(i, end - i)});
        plain_start = i = end;
        continue;
      }
      i = end;
      continue;
    }
    ++i;
  }
  if (plain_start < text.size()) pieces.push_back({-1, text.substr(plain_start)});
  return pieces;
}

bool pair_less(const Vocab& v, std::pair<int, int> a, std::pair<int, int> b) {
  const auto& al = v.token(a.first);
  const auto& bl = v.token(b.first);
  if (al != bl) return al < bl;
  return v.token(a.second) < v.token(b.second);
}

std::uint64_t pair_key(int l, int r) {
  return (static_cast<std::uint64_t>(l) << 32) | static_cast<std::uint32_t>(r);
}

}  // namespace

const std::vector<std::string>& Vocab::reserved_tokens() {
  static const std::vector<std::string> tokens = {
      "__null__", "__start__", "__end__", "__unk__",  "[style]", "[knowledge]",
      "positive/neutral", "negative", "f0", "f1", "m0", "m1"};
  return tokens;
}

Vocab::Vocab() {
  tokens_ = reserved_tokens();
  for (int b = 0; b < 256; ++b) tokens_.push_back(std::string(1, static_cast<char>(b)));
}

int Vocab::control_id(std::string_view token) const {
  const auto& reserved = reserved_tokens();
  // pad/bos/eos/unk are structural and never matched in text.
  for (int i = 4; i < static_cast<int>(reserved.size()); ++i) {
    if (reserved[i] == token) return i;
  }
  return -1;
}

void Vocab::add_merge(int left, int right) {
  tokens_.push_back(tokens_.at(left) + tokens_.at(right));
  merge_rank_[{left, right}] = static_cast<int>(merges_.size());
  merges_.emplace_back(left, right);
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    auto c = static_cast<unsigned char>(text[i]);
    auto k = classify(c);
    if (k == CharClass::Space && i + 1 < text.size()) {
      auto next = classify(static_cast<unsigned char>(text[i + 1]));
      if (next != CharClass::Space && next != CharClass::OtherWs) {
        i += 1;
        k = next;
      }
    }
    if (k == CharClass::Space || k == CharClass::OtherWs) {
      ++i;
    } else {
      while (i < text.size() && classify(static_cast<unsigned char>(text[i])) == k) ++i;
    }
    chunks.push_back(text.substr(start, i - start));
  }
  return chunks;
}

Vocab Vocab::train(std::span<const std::string> corpus, std::size_t vocab_size) {
  Vocab vocab;
  if (corpus.empty()) throw std::invalid_argument("bpe_train: empty corpus");
  if (vocab_size <= vocab.size()) {
    throw std::invalid_argument("bpe_train: vocab_size must exceed " +
                                std::to_string(vocab.size()) + " (256 bytes + reserved)");
  }

  std::map<std::string, std::size_t> chunk_freq;
  for (const auto& line : corpus) {
    for (const auto& piece : split_controls(line, vocab)) {
      if (piece.control >= 0) continue;
      for (auto chunk : pretokenize(piece.text)) ++chunk_freq[std::string(chunk)];
    }
  }
  struct Word {
    std::vector<int> ids;
    std::size_t freq;
  };
  std::vector<Word> words;
  words.reserve(chunk_freq.size());
  for (const auto& [chunk, freq] : chunk_freq) {
    Word w{{}, freq};
    for (unsigned char c : chunk) w.ids.push_back(byte_id(c));
    words.push_back(std::move(w));
  }

  while (vocab.size() < vocab_size) {
    std::unordered_map<std::uint64_t, std::size_t> counts;
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.ids.size(); ++i) counts[pair_key(w.ids[i], w.ids[i + 1])] += w.freq;
    if (counts.empty()) break;

    std::pair<int, int> best_pair{-1, -1};
    std::size_t best_count = 0;
    for (const auto& [key, count] : counts) {
      const std::pair<int, int> p{static_cast<int>(key >> 32), static_cast<int>(key & 0xFFFFFFFFu)};
      if (count > best_count || (count == best_count && pair_less(vocab, p, best_pair))) {
        best_pair = p;
        best_count = count;
      }
    }
    const auto [left, right] = best_pair;
    const int merged = static_cast<int>(vocab.size());
    vocab.add_merge(left, right);
    for (auto& w : words) {
      std::vector<int> out;
      out.reserve(w.ids.size());
      for (std::size_t i = 0; i < w.ids.size(); ++i) {
        if (i + 1 < w.ids.size() && w.ids[i] == left && w.ids[i + 1] == right) {
          out.push_back(merged);
          ++i;
        } else {
          out.push_back(w.ids[i]);
        }
      }
      w.ids = std::move(out);
    }
  }
  return vocab;
}

std::vector<int> Vocab::encode_chunk(std::string_view chunk) const {
  std::vector<int> ids;
  ids.reserve(chunk.size());
  for (unsigned char c : chunk) ids.push_back(byte_id(c));
  const int base = reserved_count() + 256;
  while (ids.size() > 1) {
    int best_rank = -1;
    std::pair<int, int> best_pair;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      auto it = merge_rank_.find({ids[i], ids[i + 1]});
      if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
        best_pair = it->first;
      }
    }
    if (best_rank < 0) break;
    std::vector<int> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i + 1 < ids.size() && ids[i] == best_pair.first && ids[i + 1] == best_pair.second) {
        out.push_back(base + best_rank);
        ++i;
      } else {
        out.push_back(ids[i]);
      }
    }
    ids = std::move(out);
  }
  return ids;
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& piece : split_controls(text, *this)) {
    if (piece.control >= 0) {
      ids.push_back(piece.control);
      continue;
    }
    for (auto chunk : pretokenize(piece.text)) {
      auto part = encode_chunk(chunk);
      ids.insert(ids.end(), part.begin(), part.end());
    }
  }
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos || id == kUnk) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw std::out_of_range("decode: token id " + std::to_string(id) + " outside vocabulary");
    }
    out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

std::string Vocab::to_json() const {
  nlohmann::json j;
  j["format"] = "mmb-bpe-1";
  j["reserved"] = reserved_tokens();
  auto merges = nlohmann::json::array();
  for (auto [l, r] : merges_) merges.push_back({l, r});
  j["merges"] = std::move(merges);
  return j.dump();
}

Vocab Vocab::from_json(std::string_view json) {
  auto j = nlohmann::json::parse(json);
  if (j.value("format", "") != "mmb-bpe-1") throw std::runtime_error("vocab: unknown format");
  if (j.at("reserved").get<std::vector<std::string>>() != reserved_tokens()) {
    throw std::runtime_error("vocab: reserved token table differs from this build");
  }
  Vocab v;
  for (const auto& m : j.at("merges")) {
    const int l = m.at(0).get<int>(), r = m.at(1).get<int>();
    if (l < reserved_count() || r < reserved_count() || l >= static_cast<int>(v.size()) ||
        r >= static_cast<int>(v.size())) {
      throw std::runtime_error("vocab: merge references invalid id");
    }
    v.add_merge(l, r);
  }
  return v;
}

std::uint64_t Vocab::hash() const { return num::fnv1a64(to_json()); }

}  // namespace mmb::text
