#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmb/train/data.hpp"
#include "mmb/train/runtime.hpp"

namespace mmb::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss went non-finite. The model holds the best parameters seen so far, which
/// were also written to the checkpoint path when one was configured.
class TrainingDiverged : public TrainError {
 public:
  using TrainError::TrainError;
};

struct TrainData {
  std::vector<std::string> names;
  std::vector<std::vector<text::Example>> datasets;
  /// Sampling weights; empty → proportional to dataset size.
  std::vector<double> weights;
  /// Held-out examples for early stopping; empty → the training examples themselves.
  std::vector<text::Example> valid;
};

struct TrainOptions {
  double lr = 1e-5;
  std::size_t warmup_steps = 100;
  std::size_t max_steps = 2000;
  std::size_t eval_interval = 100;
  std::size_t patience = 3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  text::BatchLimits limits;
  /// Stop as soon as validation ppl is at or below this (0 disables).
  double target_ppl = 0.0;
  std::string checkpoint_path;  // best checkpoint, rewritten on every improvement
  std::string log_path;         // JSONL, one record per step
};

struct LogRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> val_ppl;
};

struct TrainOutcome {
  std::size_t steps = 0;
  std::size_t evals = 0;
  double initial_val_ppl = 0.0;
  double best_val_ppl = 0.0;
  std::size_t best_step = 0;
  bool early_stopped = false;
  bool reached_target = false;
  std::vector<LogRecord> log;
};

/// sample → batch → loss → Adam, with periodic validation and early stopping.
/// On return the model holds the best validated parameters.
TrainOutcome train_model(ChatModel& m, const TrainData& data, const TrainOptions& opts);

enum class Stage { AdaptPretrain, Finetune };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);

struct DatasetRef {
  std::string path;
  double weight = 0.0;  // 0 → proportional to size
};

/// File-driven training run. Serialized as one JSON object; see README for the keys.
struct TrainConfig {
  Stage stage = Stage::Finetune;
  std::vector<DatasetRef> datasets;
  std::vector<DatasetRef> valid;
  /// Held out from each training set when no explicit validation files are given.
  double valid_fraction = 0.1;
  std::string features;
  /// Vocabulary JSON; empty → learned from the training text (or taken from init_checkpoint).
  std::string vocab;
  std::size_t vocab_size = 512;
  /// {"preset": "desk" | "reference", ...field overrides}
  nlohmann::json model = nlohmann::json::object();
  double lr = 1e-5;
  std::size_t warmup_steps = 100;
  std::size_t max_steps = 2000;
  std::size_t eval_interval = 100;
  std::size_t patience = 3;
  std::size_t batch_size = 16;
  std::optional<std::uint64_t> seed;
  std::string init_checkpoint;
  std::string output;
  std::string log;
  ExampleOptions controls;
  text::BatchLimits limits;
  double target_ppl = 0.0;

  /// Throws TrainError (missing seed, no datasets, bad numbers).
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::string& path);
};

struct RunResult {
  TrainOutcome outcome;
  std::string checkpoint;  // path written
  nlohmann::json provenance_entry;
};

/// Loads data, builds or reuses the vocabulary, trains and writes cfg.output.
RunResult run_training(const TrainConfig& cfg);

/// adapt-pretrain then fine-tune from its output. The final checkpoint's provenance lists
/// both stages with their checkpoint hashes. A failing first stage aborts the second.
RunResult staged_pipeline(const TrainConfig& adapt, TrainConfig finetune);

model::ModelConfig model_config_from(const nlohmann::json& spec, std::size_t vocab_size);

}  // namespace mmb::train
