#pragma once

// Fixed, documented PRNG so episodes are bitwise reproducible across
// platforms and standard libraries. std::uniform_int_distribution is
// implementation-defined and is never used on a sampling path.
//
//   mix64(x)            SplitMix64 finalizer
//   stream_seed(s, i)   mix64(s ^ mix64(i ^ 0xD1B54A32D192ED03))
//   Xoshiro256ss(seed)  state words = four successive SplitMix64 outputs
//   below(n)            rejection sampling: draw r until r >= (2^64 - n) mod n,
//                       return r mod n

#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace cfsl {

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return mix64(seed ^ mix64(index ^ 0xD1B54A32D192ED03ULL));
}

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

 private:
  std::uint64_t state_;
};

/// xoshiro256** 1.0 (Blackman & Vigna), public-domain reference algorithm.
class Xoshiro256ss {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Xoshiro256ss(std::uint64_t seed) noexcept {
    SplitMix64 sm(seed);
    for (auto& word : s_) word = sm.next();
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  constexpr result_type operator()() noexcept { return next(); }

  constexpr std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Unbiased integer in [0, n). n must be > 0.
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_{};
};

/// Fisher-Yates prefix selection: permutes the first k slots of `items` into a
/// uniform k-subset (in draw order). Slot i swaps with i + below(size - i).
template <typename T>
void fisher_yates_prefix(std::span<T> items, std::size_t k, Xoshiro256ss& rng) {
  for (std::size_t i = 0; i < k && i < items.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    using std::swap;
    swap(items[i], items[j]);
  }
}

/// Draws k of [0, n) without replacement, in draw order.
inline std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::size_t k,
                                                             Xoshiro256ss& rng) {
  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0u);
  fisher_yates_prefix(std::span<std::uint32_t>(pool), k, rng);
  pool.resize(k);
  return pool;
}

}  // namespace cfsl
