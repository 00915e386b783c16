#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "cfsl/pack.hpp"
#include "cfsl/rng.hpp"

namespace cfsl {

struct SyntheticSpec {
  std::string name = "synthetic";
  std::uint32_t num_classes = 20;
  std::uint32_t samples_per_class = 20;
  std::uint32_t height = 8;
  std::uint32_t width = 8;
  std::uint32_t channels = 1;
  /// Per-pixel noise is the sum of four uniform draws in [-noise, noise]
  /// (an integer, roughly Gaussian perturbation). 0 gives exact prototypes.
  std::uint32_t noise = 8;
  std::uint64_t seed = 0;
};

/// Cluster-separable pack: each class has a uniformly random prototype image
/// and its samples are that prototype plus bounded noise, clamped to [0, 255].
/// Uses integer arithmetic only, so the bytes are identical on every platform.
inline DatasetPack make_synthetic_pack(const SyntheticSpec& spec) {
  PackBuilder builder(spec.name, spec.height, spec.width, spec.channels);
  const std::size_t n = std::size_t{spec.height} * spec.width * spec.channels;
  Xoshiro256ss rng(mix64(spec.seed ^ 0x5EED5EED5EED5EEDULL));
  std::vector<std::uint8_t> prototype(n), sample(n);
  for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
    const auto id = builder.add_class("class_" + std::to_string(c));
    for (auto& p : prototype) p = static_cast<std::uint8_t>(rng.below(256));
    for (std::uint32_t s = 0; s < spec.samples_per_class; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        std::int64_t v = prototype[i];
        if (spec.noise > 0)
          for (int k = 0; k < 4; ++k)
            v += static_cast<std::int64_t>(rng.below(2 * std::uint64_t{spec.noise} + 1)) -
                 static_cast<std::int64_t>(spec.noise);
        sample[i] = static_cast<std::uint8_t>(std::clamp<std::int64_t>(v, 0, 255));
      }
      builder.add_sample(id, sample);
    }
  }
  return std::move(builder).build();
}

}  // namespace cfsl
