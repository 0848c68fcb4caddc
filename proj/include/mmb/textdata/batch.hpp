#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmb/imagefeat/features.hpp"
#include "mmb/textdata/vocab.hpp"

namespace mmb::text {

/// One assembled training/eval example.
struct Example {
  std::string context;
  std::string label;
  std::shared_ptr<const img::ImageFeatures> image;  // null when absent or ablated
};

struct BatchLimits {
  std::size_t max_context = 128;  // most recent tokens kept
  std::size_t max_label = 64;     // label tokens kept, before bos/eos
};

/// Padded, masked batch. Row-major [batch × len] matrices.
struct Batch {
  std::size_t batch = 0;
  std::size_t src_len = 0;  // S
  std::size_t tgt_len = 0;  // T, including bos and eos
  std::vector<int> input_ids;
  std::vector<std::uint8_t> input_mask;
  std::vector<int> target_ids;  // bos … eos, then pad
  std::vector<std::uint8_t> target_mask;
  std::vector<std::shared_ptr<const img::ImageFeatures>> images;  // per example, may be null
  /// Rows contributed per image (0 when no example carries one).
  std::size_t image_rows = 0;
  /// [batch × (image_rows + S)] segment ids for joint encoding: 1 for image rows, 0 for text.
  std::vector<int> segment_ids;
  std::size_t truncated_labels = 0;

  bool has_images() const { return image_rows > 0; }
  int input(std::size_t b, std::size_t s) const { return input_ids[b * src_len + s]; }
  int target(std::size_t b, std::size_t t) const { return target_ids[b * tgt_len + t]; }
};

/// Tokenizes and pads. Context keeps its most recent max_context tokens; labels
/// longer than max_label lose their tail (counted in truncated_labels). All
/// images in a batch must share one feature kind.
Batch make_batch(std::span<const Example> examples, const Vocab& vocab, const BatchLimits& limits);

/// Same, from pre-tokenized sequences.
Batch make_batch_from_ids(const std::vector<std::vector<int>>& contexts,
                          const std::vector<std::vector<int>>& labels,
                          const std::vector<std::shared_ptr<const img::ImageFeatures>>& images,
                          const BatchLimits& limits);

/// Copy of the batch with extra all-pad columns on the source and target sides.
Batch pad_batch(const Batch& batch, std::size_t extra_src, std::size_t extra_tgt);

}  // namespace mmb::text
