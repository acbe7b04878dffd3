#pragma once

#include <cstdint>
#include <random>

namespace cac {

/// Seeded 64-bit engine. Uniform variates are derived from raw engine output
/// so sequences do not depend on the standard library's distribution code.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // Rejecting the first 2^64 mod n values keeps the draw unbiased.
    const std::uint64_t limit = std::uint64_t(-n) % n;
    for (;;) {
      const std::uint64_t x = engine_();
      if (x >= limit) return x % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

/// Stream seed for appliance `index` of a run seeded with `seed`.
inline std::uint64_t appliance_seed(std::uint64_t seed, std::uint64_t index) { return seed + index; }

}  // namespace cac
