#pragma once

#include <cstdint>

namespace zsteer {

/// SplitMix64 (Steele, Lea & Flood 2014). Bit-exact on every platform, which
/// std::mt19937_64 + std::uniform_real_distribution is not.
class SplitMix64 {
public:
  static constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += golden_gamma;
    return mix(state_);
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double next_double() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  constexpr std::uint64_t next_below(std::uint64_t bound) noexcept {
    // Lemire's multiply-shift without the rejection step; bias is < 2^-32 for
    // the small bounds used here.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * bound) >> 64);
  }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

private:
  std::uint64_t state_;
};

/// Stream splitting: the seed of sub-stream `index` under `seed`.
///
/// Generation uses derive_seed(seed, step) for the draw at each decoding step,
/// and sweeps/batches use derive_seed(seed, item) per grid point or sample, so
/// every draw depends only on (seed, index) and never on scheduling order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return SplitMix64::mix(seed ^ SplitMix64::mix(index + SplitMix64::golden_gamma));
}

/// The single uniform draw consumed by decoding step `step`.
constexpr double step_uniform(std::uint64_t seed, std::uint64_t step) noexcept {
  return SplitMix64(derive_seed(seed, step)).next_double();
}

}  // namespace zsteer
