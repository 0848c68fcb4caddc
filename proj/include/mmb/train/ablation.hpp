#pragma once

#include <cstdint>

#include "json.hpp"
#include "mmb/eval/report.hpp"

namespace mmb::train {

/// Budget and model shape for synthetic ablation cells.
struct SynthAblationSpec {
  std::size_t train_per_dataset = 256;
  std::size_t valid_per_dataset = 64;
  std::size_t steps = 300;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  /// Field overrides applied on top of the desk preset.
  nlohmann::json model = {{"d_model", 64}, {"n_heads", 2}, {"d_ffn", 128}, {"n_enc_layers", 1},
                          {"n_dec_layers", 2}, {"max_positions", 96}};
  std::size_t max_generations = 8;
};

/// Runner for cells keyed by "features" (global|spatial|region), "fusion" (none|early|late)
/// and "data" ('+'-joined subset of image_chat, coco, convai2). Every cell is evaluated on all
/// three synthetic validation sets under the same step budget.
eval::CellRunner synthetic_cell_runner(const SynthAblationSpec& spec);

}  // namespace mmb::train
