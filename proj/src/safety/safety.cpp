#include "mmb/safety/safety.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace mmb::safety {

namespace {

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SafetyError("cannot open " + path);
  return in;
}

std::string slurp(const std::string& path) {
  auto in = open_or_throw(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool skip_line(const std::string& line) { return line.empty() || line[0] == '#'; }

std::set<std::string> read_word_set(const std::string& path) {
  auto in = open_or_throw(path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (skip_line(line)) continue;
    auto w = words(line);
    if (w.size() != 1) throw SafetyError(path + ": lexicon entries must be single words: " + line);
    out.insert(w[0]);
  }
  return out;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::string data_file(std::string_view name) {
  const char* env = std::getenv("MMB_DATA_DIR");
  std::filesystem::path dir = (env && *env) ? env : MMB_DATA_DIR;
  return (dir / std::string(name)).string();
}

std::vector<ManifestEntry> read_manifest(const std::string& dir) {
  auto in = open_or_throw((std::filesystem::path(dir) / "MANIFEST.tsv").string());
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (skip_line(trim(line))) continue;
    std::istringstream fields(line);
    ManifestEntry e;
    std::string hash;
    if (!(fields >> e.file >> e.version >> hash)) throw SafetyError("malformed manifest line: " + line);
    e.hash = std::stoull(hash, nullptr, 16);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> verify_manifest(const std::string& dir) {
  std::vector<std::string> bad;
  for (const auto& e : read_manifest(dir)) {
    const auto path = (std::filesystem::path(dir) / e.file).string();
    if (!std::filesystem::exists(path) || num::fnv1a64(slurp(path)) != e.hash) bad.push_back(e.file);
  }
  return bad;
}

namespace {

// Shipped files are loaded only when they match their manifest entry.
std::string checked_data_file(std::string_view name) {
  const auto path = data_file(name);
  const auto dir = std::filesystem::path(path).parent_path().string();
  for (const auto& e : read_manifest(dir)) {
    if (e.file != name) continue;
    if (num::fnv1a64(slurp(path)) != e.hash)
      throw SafetyError(path + " does not match its MANIFEST.tsv hash");
    return path;
  }
  throw SafetyError(std::string(name) + " is not listed in " + dir + "/MANIFEST.tsv");
}

}  // namespace

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      cur.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string_view bucket_name(Bucket b) {
  switch (b) {
    case Bucket::Positive: return "positive";
    case Bucket::Neutral: return "neutral";
    case Bucket::Negative: return "negative";
  }
  return "";
}

std::string_view bucket_string(Bucket b) { return b == Bucket::Negative ? kNegative : kPositiveNeutral; }

StyleRegistry StyleRegistry::parse(std::istream& in, std::size_t expected) {
  StyleRegistry reg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_line(trim(line))) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw SafetyError("style registry line " + std::to_string(lineno) + ": missing tab");
    const std::string style = trim(line.substr(0, tab));
    const std::string bucket = trim(line.substr(tab + 1));
    Bucket b;
    if (bucket == "positive") b = Bucket::Positive;
    else if (bucket == "neutral") b = Bucket::Neutral;
    else if (bucket == "negative") b = Bucket::Negative;
    else throw SafetyError("style registry line " + std::to_string(lineno) + ": unknown bucket '" + bucket + "'");
    if (style.empty()) throw SafetyError("style registry line " + std::to_string(lineno) + ": empty style");
    if (!reg.buckets_.emplace(style, b).second)
      throw SafetyError("style registry line " + std::to_string(lineno) + ": duplicate style '" + style + "'");
    reg.order_.push_back(style);
  }
  if (expected != 0 && reg.size() != expected)
    throw SafetyError("style registry has " + std::to_string(reg.size()) + " styles, expected " +
                      std::to_string(expected));
  return reg;
}

StyleRegistry StyleRegistry::load(const std::string& path, std::size_t expected) {
  auto in = open_or_throw(path);
  return parse(in, expected);
}

StyleRegistry StyleRegistry::load_default() { return load(checked_data_file("styles.tsv")); }

Bucket StyleRegistry::bucket(const std::string& style) const {
  auto it = buckets_.find(style);
  if (it == buckets_.end()) throw UnknownStyle("unknown style '" + style + "'");
  return it->second;
}

std::vector<std::string> StyleRegistry::styles_in(Bucket b) const {
  std::vector<std::string> out;
  for (const auto& s : order_)
    if (buckets_.at(s) == b) out.push_back(s);
  return out;
}

std::string bucket_replace(const StyleRegistry& reg, const std::string& style, double p_replace,
                           num::SplitMix64& rng) {
  const Bucket b = reg.bucket(style);
  if (rng.uniform() < p_replace) return std::string(bucket_string(b));
  return style;
}

GenderLexicon::GenderLexicon(std::set<std::string> female, std::set<std::string> male)
    : female_(std::move(female)), male_(std::move(male)) {
  if (female_.empty() || male_.empty()) throw SafetyError("gender lexicon sets must be non-empty");
  for (const auto& w : female_)
    if (male_.count(w)) throw SafetyError("gender lexicon word in both sets: " + w);
}

GenderLexicon GenderLexicon::load(const std::string& female_path, const std::string& male_path) {
  return GenderLexicon(read_word_set(female_path), read_word_set(male_path));
}

GenderLexicon GenderLexicon::load_default() {
  return load(checked_data_file("gender_female.txt"), checked_data_file("gender_male.txt"));
}

std::string GenderFlags::control() const {
  return std::string(female ? "f1" : "f0") + (male ? " m1" : " m0");
}

GenderFlags classify_gender(std::string_view text, const GenderLexicon& lex) {
  GenderFlags f;
  for (const auto& w : words(text)) {
    f.female = f.female || lex.female().count(w);
    f.male = f.male || lex.male().count(w);
  }
  return f;
}

Blocklist::Blocklist(const std::vector<std::string>& phrases) {
  for (const auto& p : phrases) {
    auto w = words(p);
    if (!w.empty()) phrases_.push_back(std::move(w));
  }
}

Blocklist Blocklist::parse(std::istream& in) {
  std::vector<std::string> phrases;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!skip_line(line)) phrases.push_back(line);
  }
  return Blocklist(phrases);
}

Blocklist Blocklist::load(const std::string& path) {
  auto in = open_or_throw(path);
  return parse(in);
}

Blocklist Blocklist::load_default() { return load(checked_data_file("blocklist.txt")); }

std::vector<std::string> Blocklist::match(std::string_view text) const {
  std::vector<std::string> out;
  if (phrases_.empty()) return out;
  const auto toks = words(text);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    for (const auto& p : phrases_) {
      if (i + p.size() > toks.size()) continue;
      if (std::equal(p.begin(), p.end(), toks.begin() + static_cast<std::ptrdiff_t>(i))) {
        std::string joined = p[0];
        for (std::size_t k = 1; k < p.size(); ++k) joined += " " + p[k];
        out.push_back(std::move(joined));
      }
    }
  }
  return out;
}

OffensiveClassifier::OffensiveClassifier(std::size_t max_ngram, std::size_t hash_bits, std::vector<double> weights,
                                         double bias)
    : max_ngram_(max_ngram), hash_bits_(hash_bits), weights_(std::move(weights)), bias_(bias) {
  if (max_ngram_ == 0 || hash_bits_ == 0 || hash_bits_ > 30) throw SafetyError("bad classifier shape");
  if (weights_.size() != (std::size_t{1} << hash_bits_)) throw SafetyError("classifier weight size mismatch");
}

std::vector<std::uint32_t> OffensiveClassifier::features(std::string_view text) const {
  const auto toks = words(text);
  const std::uint64_t mask = (std::uint64_t{1} << hash_bits_) - 1;
  std::vector<std::uint32_t> out;
  for (std::size_t n = 1; n <= max_ngram_; ++n) {
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      std::uint64_t h = num::fnv1a64(std::to_string(n));
      for (std::size_t k = 0; k < n; ++k) h = num::fnv1a64(toks[i + k], num::fnv1a64(" ", h));
      out.push_back(static_cast<std::uint32_t>(h & mask));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double OffensiveClassifier::score(std::string_view text) const {
  if (weights_.empty()) return sigmoid(bias_);
  double z = bias_;
  for (auto f : features(text)) z += weights_[f];
  return sigmoid(z);
}

std::string OffensiveClassifier::to_json() const {
  nlohmann::json j;
  j["format"] = "mmb-offensive-classifier";
  j["max_ngram"] = max_ngram_;
  j["hash_bits"] = hash_bits_;
  j["bias"] = bias_;
  nlohmann::json sparse = nlohmann::json::array();
  for (std::size_t i = 0; i < weights_.size(); ++i)
    if (weights_[i] != 0.0) sparse.push_back({i, weights_[i]});
  j["weights"] = std::move(sparse);
  return j.dump();
}

OffensiveClassifier OffensiveClassifier::from_json(std::string_view json) {
  try {
    auto j = nlohmann::json::parse(json);
    if (j.at("format") != "mmb-offensive-classifier") throw SafetyError("not a classifier file");
    const std::size_t bits = j.at("hash_bits");
    if (bits == 0 || bits > 30) throw SafetyError("bad classifier shape");
    std::vector<double> w(std::size_t{1} << bits, 0.0);
    for (const auto& e : j.at("weights")) {
      const std::size_t idx = e.at(0);
      if (idx >= w.size()) throw SafetyError("classifier weight index out of range");
      w[idx] = e.at(1);
    }
    return OffensiveClassifier(j.at("max_ngram"), bits, std::move(w), j.at("bias"));
  } catch (const nlohmann::json::exception& e) {
    throw SafetyError(std::string("malformed classifier: ") + e.what());
  }
}

void OffensiveClassifier::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SafetyError("cannot write " + path);
  out << to_json();
}

OffensiveClassifier OffensiveClassifier::load(const std::string& path) { return from_json(slurp(path)); }

OffensiveClassifier train_offensive_classifier(const std::vector<LabeledUtterance>& data,
                                               const ClassifierOptions& opts) {
  const auto positives = std::count_if(data.begin(), data.end(), [](const auto& u) { return u.offensive; });
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(data.size()))
    throw SafetyError("classifier training data must contain both offensive and safe examples");

  OffensiveClassifier shape(opts.max_ngram, opts.hash_bits, std::vector<double>(std::size_t{1} << opts.hash_bits), 0.0);
  std::vector<std::vector<std::uint32_t>> feats;
  feats.reserve(data.size());
  for (const auto& u : data) feats.push_back(shape.features(u.text));

  std::vector<double> w(std::size_t{1} << opts.hash_bits, 0.0);
  double bias = 0.0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  num::SplitMix64 rng(opts.seed);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const double lr = opts.learning_rate / (1.0 + 0.1 * static_cast<double>(epoch));
    for (auto idx : order) {
      double z = bias;
      for (auto f : feats[idx]) z += w[f];
      const double g = sigmoid(z) - (data[idx].offensive ? 1.0 : 0.0);
      bias -= lr * g;
      for (auto f : feats[idx]) w[f] -= lr * (g + opts.l2 * w[f]);
    }
  }
  return OffensiveClassifier(opts.max_ngram, opts.hash_bits, std::move(w), bias);
}

std::vector<LabeledUtterance> read_labeled_tsv(std::istream& in) {
  std::vector<LabeledUtterance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_line(line)) continue;
    const auto tab = line.find('\t');
    const std::string label = tab == std::string::npos ? "" : line.substr(0, tab);
    if (label != "0" && label != "1")
      throw SafetyError("labeled data line " + std::to_string(lineno) + ": expected '0|1<TAB>text'");
    out.push_back({line.substr(tab + 1), label == "1"});
  }
  return out;
}

SafetyVerdict assess(std::string_view text, const Blocklist& bl, const OffensiveClassifier* clf,
                     const GenderLexicon& lex) {
  SafetyVerdict v;
  v.blocklist_hits = bl.match(text);
  v.offensive_by_blocklist = !v.blocklist_hits.empty();
  if (clf) {
    v.classifier_score = clf->score(text);
    v.offensive_by_classifier = clf->offensive(text);
  }
  v.gender = classify_gender(text, lex);
  return v;
}

std::string format_percent(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", pct);
  return buf;
}

const RatioCell& RatioTable::at(const std::string& row, const std::string& column) const {
  auto r = std::find(rows.begin(), rows.end(), row);
  auto c = std::find(columns.begin(), columns.end(), column);
  if (r == rows.end() || c == columns.end()) throw SafetyError("no cell " + row + " / " + column);
  return cells[static_cast<std::size_t>(r - rows.begin())][static_cast<std::size_t>(c - columns.begin())];
}

std::string RatioTable::to_tsv() const {
  std::ostringstream out;
  out << row_header;
  for (const auto& c : columns) out << '\t' << c;
  for (const auto& c : columns) out << '\t' << c << " hits\t" << c << " total";
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << rows[r];
    for (const auto& cell : cells[r]) out << '\t' << format_percent(cell.percent());
    for (const auto& cell : cells[r]) out << '\t' << cell.hits << '\t' << cell.total;
    out << '\n';
  }
  return out.str();
}

RatioTable toxicity_report(const std::vector<text::Episode>& episodes, const std::vector<std::string>& conditionings,
                           const std::vector<const Detector*>& detectors, const ResponseGenerator& generate,
                           const PolarityOf& polarity) {
  if (episodes.empty()) throw SafetyError("toxicity report needs at least one episode");
  if (detectors.empty()) throw SafetyError("toxicity report needs at least one detector");
  RatioTable t;
  t.row_header = "Style";
  t.rows = conditionings;
  const std::vector<std::string> splits = polarity ? std::vector<std::string>{"Pos", "Neg"} : std::vector<std::string>{""};
  for (const auto& s : splits)
    for (const auto* d : detectors) t.columns.push_back(s.empty() ? d->name() : s + " " + d->name());

  for (const auto& cond : conditionings) {
    std::vector<RatioCell> row(t.columns.size());
    for (const auto& ep : episodes) {
      std::size_t split = 0;
      if (polarity) {
        auto p = polarity(ep);
        if (!p) continue;
        split = *p == Bucket::Negative ? 1 : 0;
      }
      const std::string reply = generate(ep, cond);
      for (std::size_t d = 0; d < detectors.size(); ++d) {
        auto& cell = row[split * detectors.size() + d];
        ++cell.total;
        cell.hits += detectors[d]->offensive(reply) ? 1 : 0;
      }
    }
    t.cells.push_back(std::move(row));
  }
  return t;
}

RatioTable degender_report(const std::vector<std::pair<std::string, std::vector<std::string>>>& sources,
                           const GenderLexicon& lex) {
  RatioTable t;
  t.row_header = "Model";
  t.columns = {"Male words", "Female words"};
  for (const auto& [name, utterances] : sources) {
    std::vector<RatioCell> row(2);
    for (const auto& u : utterances) {
      const auto g = classify_gender(u, lex);
      row[0].hits += g.male;
      row[1].hits += g.female;
    }
    row[0].total = row[1].total = utterances.size();
    t.rows.push_back(name);
    t.cells.push_back(std::move(row));
  }
  return t;
}

}  // namespace mmb::safety
