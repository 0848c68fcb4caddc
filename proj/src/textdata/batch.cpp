#include "mmb/textdata/batch.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>

namespace mmb::text {

Batch make_batch_from_ids(const std::vector<std::vector<int>>& contexts,
                          const std::vector<std::vector<int>>& labels,
                          const std::vector<std::shared_ptr<const img::ImageFeatures>>& images,
                          const BatchLimits& limits) {
  if (contexts.empty()) throw std::invalid_argument("make_batch: empty batch");
  if (labels.size() != contexts.size() || images.size() != contexts.size()) {
    throw std::invalid_argument("make_batch: field counts differ");
  }
  if (limits.max_context == 0 || limits.max_label == 0) {
    throw std::invalid_argument("make_batch: limits must be positive");
  }
  Batch b;
  b.batch = contexts.size();

  std::vector<std::span<const int>> ctx;
  std::vector<std::span<const int>> lab;
  for (std::size_t i = 0; i < b.batch; ++i) {
    std::span<const int> c(contexts[i]);
    if (c.size() > limits.max_context) c = c.subspan(c.size() - limits.max_context);
    ctx.push_back(c);
    std::span<const int> l(labels[i]);
    if (l.size() > limits.max_label) {
      l = l.first(limits.max_label);
      ++b.truncated_labels;
    }
    lab.push_back(l);
  }

  for (const auto& c : ctx) b.src_len = std::max(b.src_len, c.size());
  b.src_len = std::max<std::size_t>(b.src_len, 1);
  for (const auto& l : lab) b.tgt_len = std::max(b.tgt_len, l.size() + 2);

  b.input_ids.assign(b.batch * b.src_len, Vocab::kPad);
  b.input_mask.assign(b.batch * b.src_len, 0);
  b.target_ids.assign(b.batch * b.tgt_len, Vocab::kPad);
  b.target_mask.assign(b.batch * b.tgt_len, 0);
  for (std::size_t i = 0; i < b.batch; ++i) {
    for (std::size_t s = 0; s < ctx[i].size(); ++s) {
      b.input_ids[i * b.src_len + s] = ctx[i][s];
      b.input_mask[i * b.src_len + s] = 1;
    }
    int* row = b.target_ids.data() + i * b.tgt_len;
    row[0] = Vocab::kBos;
    for (std::size_t t = 0; t < lab[i].size(); ++t) row[t + 1] = lab[i][t];
    row[lab[i].size() + 1] = Vocab::kEos;
    std::fill_n(b.target_mask.begin() + static_cast<std::ptrdiff_t>(i * b.tgt_len), lab[i].size() + 2, 1);
  }

  b.images = images;
  std::optional<img::FeatureKind> kind;
  for (const auto& im : images) {
    if (!im) continue;
    if (kind && *kind != im->kind) throw std::invalid_argument("make_batch: mixed feature kinds");
    kind = im->kind;
  }
  b.image_rows = kind ? img::rows_for(*kind) : 0;
  const std::size_t joint = b.image_rows + b.src_len;
  b.segment_ids.assign(b.batch * joint, 0);
  for (std::size_t i = 0; i < b.batch; ++i)
    for (std::size_t r = 0; r < b.image_rows; ++r) b.segment_ids[i * joint + r] = 1;
  return b;
}

Batch make_batch(std::span<const Example> examples, const Vocab& vocab, const BatchLimits& limits) {
  if (examples.empty()) throw std::invalid_argument("make_batch: empty batch");
  std::vector<std::vector<int>> contexts, labels;
  std::vector<std::shared_ptr<const img::ImageFeatures>> images;
  for (const auto& ex : examples) {
    contexts.push_back(vocab.encode(ex.context));
    labels.push_back(vocab.encode(ex.label));
    images.push_back(ex.image);
  }
  return make_batch_from_ids(contexts, labels, images, limits);
}

Batch pad_batch(const Batch& batch, std::size_t extra_src, std::size_t extra_tgt) {
  Batch out = batch;
  out.src_len = batch.src_len + extra_src;
  out.tgt_len = batch.tgt_len + extra_tgt;
  out.input_ids.assign(out.batch * out.src_len, Vocab::kPad);
  out.input_mask.assign(out.batch * out.src_len, 0);
  out.target_ids.assign(out.batch * out.tgt_len, Vocab::kPad);
  out.target_mask.assign(out.batch * out.tgt_len, 0);
  for (std::size_t i = 0; i < batch.batch; ++i) {
    for (std::size_t s = 0; s < batch.src_len; ++s) {
      out.input_ids[i * out.src_len + s] = batch.input_ids[i * batch.src_len + s];
      out.input_mask[i * out.src_len + s] = batch.input_mask[i * batch.src_len + s];
    }
    for (std::size_t t = 0; t < batch.tgt_len; ++t) {
      out.target_ids[i * out.tgt_len + t] = batch.target_ids[i * batch.tgt_len + t];
      out.target_mask[i * out.tgt_len + t] = batch.target_mask[i * batch.tgt_len + t];
    }
  }
  const std::size_t joint = out.image_rows + out.src_len;
  out.segment_ids.assign(out.batch * joint, 0);
  for (std::size_t i = 0; i < out.batch; ++i)
    for (std::size_t r = 0; r < out.image_rows; ++r) out.segment_ids[i * joint + r] = 1;
  return out;
}

}  // namespace mmb::text
