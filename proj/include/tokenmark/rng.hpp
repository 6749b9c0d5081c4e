#pragma once

#include <cstdint>

namespace tokenmark {

// splitmix64 (Steele, Lea, Flood; public-domain reference constants).
// Chosen for the permutation generator and all harness RNG because the
// sequence is bit-identical on every platform, unlike std::mt19937_64
// combined with std::uniform_int_distribution.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Unbiased draw from [0, bound) by rejection; bound >= 1.
  // Rejects draws above the largest multiple of bound so each residue is
  // equally likely.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

// Stable derivation of unrelated child seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t lane) {
  SplitMix64 rng(master ^ (0x9E3779B97F4A7C15ULL * (lane + 1)));
  return rng.next();
}

}  // namespace tokenmark
