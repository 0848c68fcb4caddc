#include "mmb/textdata/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace mmb::text {

std::vector<DatasetSpec> proportional_weights(std::vector<DatasetSpec> specs) {
  for (auto& s : specs) s.weight = static_cast<double>(s.size);
  return specs;
}

MultitaskSampler::MultitaskSampler(std::vector<DatasetSpec> specs, std::uint64_t seed)
    : specs_(std::move(specs)), rng_(seed) {
  if (specs_.empty()) throw std::invalid_argument("sampler: no datasets");
  double total = 0.0;
  for (const auto& s : specs_) {
    if (!(s.weight > 0.0) || !std::isfinite(s.weight)) {
      throw std::invalid_argument("sampler: dataset '" + s.name + "' needs a positive weight");
    }
    if (s.size == 0) throw std::invalid_argument("sampler: dataset '" + s.name + "' is empty");
    total += s.weight;
    cumulative_.push_back(total);
  }
  for (auto& c : cumulative_) c /= total;
}

MultitaskSampler::Draw MultitaskSampler::next() {
  const double u = rng_.uniform();
  std::size_t d = 0;
  while (d + 1 < cumulative_.size() && u >= cumulative_[d]) ++d;
  return {d, static_cast<std::size_t>(rng_.below(specs_[d].size))};
}

}  // namespace mmb::text
