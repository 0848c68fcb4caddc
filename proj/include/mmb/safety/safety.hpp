#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmb/numerics/rng.hpp"
#include "mmb/textdata/episode.hpp"

namespace mmb::safety {

class SafetyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownStyle : public SafetyError {
 public:
  using SafetyError::SafetyError;
};

/// Path of a shipped data file; the MMB_DATA_DIR environment variable overrides the built-in directory.
std::string data_file(std::string_view name);

struct ManifestEntry {
  std::string file;
  int version = 0;
  std::uint64_t hash = 0;
};

std::vector<ManifestEntry> read_manifest(const std::string& dir);
/// Names of files whose current hash differs from MANIFEST.tsv.
std::vector<std::string> verify_manifest(const std::string& dir);

/// Lowercased runs of ASCII letters, digits and non-ASCII bytes. Everything else separates words.
std::vector<std::string> words(std::string_view text);

enum class Bucket { Positive, Neutral, Negative };

std::string_view bucket_name(Bucket b);
/// "positive/neutral" or "negative".
std::string_view bucket_string(Bucket b);
inline constexpr std::string_view kPositiveNeutral = "positive/neutral";
inline constexpr std::string_view kNegative = "negative";

class StyleRegistry {
 public:
  static constexpr std::size_t kExpectedSize = 215;

  /// Lines are "style<TAB>bucket"; '#' starts a comment line. Enforces the expected size
  /// unless `expected` is 0.
  static StyleRegistry parse(std::istream& in, std::size_t expected = kExpectedSize);
  static StyleRegistry load(const std::string& path, std::size_t expected = kExpectedSize);
  static StyleRegistry load_default();

  std::size_t size() const { return buckets_.size(); }
  bool contains(const std::string& style) const { return buckets_.count(style) > 0; }
  /// Throws UnknownStyle.
  Bucket bucket(const std::string& style) const;
  /// Registry order.
  const std::vector<std::string>& styles() const { return order_; }
  std::vector<std::string> styles_in(Bucket b) const;

 private:
  std::map<std::string, Bucket> buckets_;
  std::vector<std::string> order_;
};

/// With probability p_replace returns the bucket string, otherwise the style itself.
std::string bucket_replace(const StyleRegistry& reg, const std::string& style, double p_replace,
                           num::SplitMix64& rng);

class GenderLexicon {
 public:
  GenderLexicon(std::set<std::string> female, std::set<std::string> male);
  static GenderLexicon load(const std::string& female_path, const std::string& male_path);
  static GenderLexicon load_default();

  const std::set<std::string>& female() const { return female_; }
  const std::set<std::string>& male() const { return male_; }

 private:
  std::set<std::string> female_, male_;
};

struct GenderFlags {
  bool female = false;
  bool male = false;
  /// "f{0|1} m{0|1}"
  std::string control() const;
  bool operator==(const GenderFlags&) const = default;
};

GenderFlags classify_gender(std::string_view text, const GenderLexicon& lex);

class Blocklist {
 public:
  Blocklist() = default;
  explicit Blocklist(const std::vector<std::string>& phrases);
  /// Newline-separated phrases; blank and '#' lines are skipped.
  static Blocklist parse(std::istream& in);
  static Blocklist load(const std::string& path);
  static Blocklist load_default();

  /// One entry per occurrence, in text order, as the normalized phrase.
  std::vector<std::string> match(std::string_view text) const;
  std::size_t size() const { return phrases_.size(); }

 private:
  std::vector<std::vector<std::string>> phrases_;
};

inline std::vector<std::string> blocklist_match(std::string_view text, const Blocklist& bl) { return bl.match(text); }

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string name() const = 0;
  /// Offensiveness score in [0, 1].
  virtual double score(std::string_view text) const = 0;
  virtual bool offensive(std::string_view text) const { return score(text) >= 0.5; }
};

class BlocklistDetector : public Detector {
 public:
  explicit BlocklistDetector(Blocklist bl) : bl_(std::move(bl)) {}
  std::string name() const override { return "Blocklist"; }
  double score(std::string_view text) const override { return bl_.match(text).empty() ? 0.0 : 1.0; }
  const Blocklist& blocklist() const { return bl_; }

 private:
  Blocklist bl_;
};

struct ClassifierOptions {
  std::size_t max_ngram = 2;
  std::size_t hash_bits = 18;
  std::size_t epochs = 30;
  double learning_rate = 0.5;
  double l2 = 1e-5;
  std::uint64_t seed = 1;
};

/// Logistic regression over hashed word n-grams.
class OffensiveClassifier : public Detector {
 public:
  OffensiveClassifier() = default;
  OffensiveClassifier(std::size_t max_ngram, std::size_t hash_bits, std::vector<double> weights, double bias);

  std::string name() const override { return "Classifier"; }
  double score(std::string_view text) const override;

  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }
  std::size_t max_ngram() const { return max_ngram_; }
  std::size_t hash_bits() const { return hash_bits_; }

  /// Sorted, de-duplicated feature indices of a text.
  std::vector<std::uint32_t> features(std::string_view text) const;

  std::string to_json() const;
  static OffensiveClassifier from_json(std::string_view json);
  void save(const std::string& path) const;
  static OffensiveClassifier load(const std::string& path);

 private:
  std::size_t max_ngram_ = 2;
  std::size_t hash_bits_ = 18;
  std::vector<double> weights_;
  double bias_ = 0.0;
};

struct LabeledUtterance {
  std::string text;
  bool offensive = false;
};

/// Throws SafetyError unless both classes are present.
OffensiveClassifier train_offensive_classifier(const std::vector<LabeledUtterance>& data,
                                               const ClassifierOptions& opts = {});

std::vector<LabeledUtterance> read_labeled_tsv(std::istream& in);

struct SafetyVerdict {
  std::vector<std::string> blocklist_hits;
  double classifier_score = 0.0;
  bool offensive_by_blocklist = false;
  bool offensive_by_classifier = false;
  GenderFlags gender;
};

SafetyVerdict assess(std::string_view text, const Blocklist& bl, const OffensiveClassifier* clf,
                     const GenderLexicon& lex);

struct RatioCell {
  std::size_t hits = 0;
  std::size_t total = 0;
  double percent() const { return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total); }
};

std::string format_percent(double pct);

/// Rows of labelled ratio cells. TSV output carries each percentage with its counts.
struct RatioTable {
  std::string row_header;
  std::vector<std::string> columns;
  std::vector<std::string> rows;
  std::vector<std::vector<RatioCell>> cells;

  const RatioCell& at(const std::string& row, const std::string& column) const;
  std::string to_tsv() const;
};

/// Generates one response for an episode under the given conditioning string.
using ResponseGenerator = std::function<std::string(const text::Episode&, const std::string& conditioning)>;
/// Round-1 style polarity of an episode, when known.
using PolarityOf = std::function<std::optional<Bucket>(const text::Episode&)>;

/// Toxicity ratio per conditioning. Without a polarity function the columns are the detector
/// names; with one they become "Pos <name>" and "Neg <name>". Throws SafetyError on an empty
/// episode set or an empty detector list.
RatioTable toxicity_report(const std::vector<text::Episode>& episodes, const std::vector<std::string>& conditionings,
                           const std::vector<const Detector*>& detectors, const ResponseGenerator& generate,
                           const PolarityOf& polarity = nullptr);

/// Share of utterances containing male and female words, per named source.
RatioTable degender_report(const std::vector<std::pair<std::string, std::vector<std::string>>>& sources,
                           const GenderLexicon& lex);

}  // namespace mmb::safety
