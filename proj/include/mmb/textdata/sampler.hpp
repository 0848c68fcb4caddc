#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmb/numerics/rng.hpp"

namespace mmb::text {

struct DatasetSpec {
  std::string name;
  std::size_t size = 0;
  double weight = 0.0;
};

/// Weights equal to dataset sizes.
std::vector<DatasetSpec> proportional_weights(std::vector<DatasetSpec> specs);

/// Infinite seeded stream of (dataset, episode index) draws. A dataset is
/// chosen with probability weight / Σweights, then an episode uniformly.
class MultitaskSampler {
 public:
  struct Draw {
    std::size_t dataset = 0;
    std::size_t index = 0;
    bool operator==(const Draw&) const = default;
  };

  MultitaskSampler(std::vector<DatasetSpec> specs, std::uint64_t seed);

  Draw next();
  const std::vector<DatasetSpec>& datasets() const { return specs_; }

 private:
  std::vector<DatasetSpec> specs_;
  std::vector<double> cumulative_;
  num::SplitMix64 rng_;
};

}  // namespace mmb::text
