#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmb/decode/beam.hpp"
#include "mmb/textdata/episode.hpp"
#include "mmb/train/data.hpp"
#include "mmb/train/runtime.hpp"

namespace mmb::eval {

struct DatasetScores {
  std::string dataset;
  bool text_only = false;
  double ppl = 0.0;
  double f1 = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  std::size_t tokens = 0;
  std::size_t examples = 0;
  std::size_t generated = 0;  // examples scored with generation metrics
};

using Keys = std::vector<std::pair<std::string, std::string>>;

struct EvalReport {
  Keys keys;
  std::vector<DatasetScores> rows;
  /// Image-Chat examples with no prior dialogue.
  std::optional<DatasetScores> ic_first_turn;
  std::optional<std::string> failure;

  /// Mean ppl of text-only rows; nullopt when there are none.
  std::optional<double> text_only_avg_ppl() const;
  std::optional<double> all_avg_ppl() const;
  const DatasetScores* find(const std::string& dataset) const;
};

/// One row per report: grouping keys, per-dataset ppl, text-only average, Image-Chat
/// first turn, overall average, status ("ok" or "FAILED: ...").
std::string ablation_tsv(const std::vector<EvalReport>& reports);

/// Per-dataset metric table of one report.
std::string metrics_tsv(const EvalReport& report);

struct EvalOptions {
  decode::BeamConfig beam = train::desk_beam();
  text::BatchLimits limits;
  /// Generation metrics on at most this many examples per dataset (0 skips generation).
  std::size_t max_generations = 64;
};

DatasetScores evaluate_examples(const train::ChatModel& m, const std::string& name, bool text_only,
                                const std::vector<text::Example>& examples, const EvalOptions& opts);

/// Scores every named episode set; Image-Chat sets also feed the first-turn column.
EvalReport evaluate(const train::ChatModel& m,
                    const std::vector<std::pair<std::string, std::vector<text::Episode>>>& datasets,
                    train::ExampleBuilder& builder, const EvalOptions& opts);

struct AblationCell {
  Keys keys;
  std::string value(const std::string& key) const;
};

using CellRunner = std::function<EvalReport(const AblationCell&)>;

/// Cartesian product in the given key order.
std::vector<AblationCell> ablation_grid(const std::vector<std::pair<std::string, std::vector<std::string>>>& axes);

/// Runs every cell, on up to `threads` worker threads. Results keep grid order. A cell that
/// throws yields a report carrying its keys and a failure message; the others still run.
std::vector<EvalReport> run_ablation(const std::vector<AblationCell>& grid, const CellRunner& run,
                                     std::size_t threads = 1);

}  // namespace mmb::eval
