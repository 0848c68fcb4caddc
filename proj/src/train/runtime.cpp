#include "mmb/train/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mmb/model/inference.hpp"

namespace mmb::train {

ChatModel ChatModel::from_checkpoint(const std::string& path) {
  auto ck = model::load_checkpoint(path);
  ChatModel m{ck.config, std::move(ck.params), text::Vocab::from_json(ck.vocab_json), ck.provenance};
  if (m.vocab.size() != m.config.vocab_size)
    throw model::CheckpointError(path + ": vocabulary size does not match the model config");
  return m;
}

ChatModel ChatModel::fresh(const model::ModelConfig& config, text::Vocab vocab, std::uint64_t seed) {
  if (vocab.size() != config.vocab_size) throw model::ConfigError("vocab_size does not match the vocabulary");
  return {config, model::init_params<float>(config, seed), std::move(vocab), nlohmann::json::array()};
}

model::Checkpoint ChatModel::to_checkpoint() const { return {config, params, vocab.to_json(), provenance}; }

decode::BeamConfig desk_beam() {
  decode::BeamConfig c;
  c.beam_size = 4;
  c.min_length = 2;
  c.max_length = 24;
  return c;
}

text::BatchLimits fit_limits(const model::ModelConfig& config, text::BatchLimits limits) {
  limits.max_context = std::min(limits.max_context, config.max_positions);
  // Decoder inputs are bos + label, targets label + eos.
  if (config.max_positions >= 2) limits.max_label = std::min(limits.max_label, config.max_positions - 1);
  return limits;
}

Generation generate(const ChatModel& m, const text::Example& ex, const decode::BeamConfig& beam,
                    const text::BatchLimits& limits) {
  num::NoGradGuard no_grad;
  auto batch = text::make_batch(std::span<const text::Example>(&ex, 1), m.vocab, fit_limits(m.config, limits));
  auto memory = model::encode(m.params, m.config, batch);
  model::CachedDecoder dec(m.params, m.config, memory);

  Generation g;
  for (std::size_t s = 0; s < batch.src_len; ++s)
    if (batch.input_mask[s]) g.context.push_back(batch.input_ids[s]);

  auto cfg = beam;
  for (int id : {text::Vocab::kPad, text::Vocab::kBos, text::Vocab::kUnk})
    if (std::find(cfg.suppress.begin(), cfg.suppress.end(), id) == cfg.suppress.end()) cfg.suppress.push_back(id);
  // Leave room for bos in the decoder's position table.
  if (cfg.max_length + 1 > m.config.max_positions) cfg.max_length = m.config.max_positions - 1;
  if (cfg.min_length >= cfg.max_length) cfg.min_length = cfg.max_length - 1;

  auto result = decode::beam_search(dec, g.context, cfg);
  g.tokens = result.best.tokens;
  g.finished = result.best.finished;
  if (g.finished && !g.tokens.empty()) g.tokens.pop_back();
  g.log_prob = result.best.log_prob;
  g.fallback_steps = result.fallback_steps;
  g.text = m.vocab.decode(g.tokens);
  return g;
}

double Perplexity::value() const {
  if (tokens == 0) throw std::invalid_argument("perplexity over zero target tokens");
  return std::exp(nll_sum / static_cast<double>(tokens));
}

Perplexity perplexity(const model::ModelParams<float>& params, const model::ModelConfig& config,
                      std::span<const text::Batch> batches) {
  num::NoGradGuard no_grad;
  Perplexity p;
  for (const auto& b : batches) {
    auto out = model::forward_loss(params, config, b);
    p.nll_sum += out.nll_sum;
    p.tokens += out.tokens;
  }
  return p;
}

std::vector<text::Batch> make_batches(std::span<const text::Example> examples, const text::Vocab& vocab,
                                      const text::BatchLimits& limits, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<text::Batch> out;
  for (std::size_t i = 0; i < examples.size(); i += batch_size)
    out.push_back(text::make_batch(examples.subspan(i, std::min(batch_size, examples.size() - i)), vocab, limits));
  return out;
}

Perplexity perplexity(const ChatModel& m, std::span<const text::Example> examples, const text::BatchLimits& limits,
                      std::size_t batch_size) {
  const auto batches = make_batches(examples, m.vocab, fit_limits(m.config, limits), batch_size);
  return perplexity(m.params, m.config, batches);
}

}  // namespace mmb::train
