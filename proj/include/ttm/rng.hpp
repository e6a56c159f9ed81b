#pragma once

// Counter-based random numbers. Output i of a stream with key k is
// splitmix64_mix(k + (i + 1) * golden), so a stream is fully described by
// (key, counter) and is bit-identical across platforms.
//
// Seed splitting: every consumer derives its own key from the run seed with
// derive_seed(seed, tag, a, b), where tag names the consumer ("backbone",
// "projection", "modulator", "shuffle", "generator", "split") and a, b are
// small indices (layer, epoch, ...). The derivation is FNV-1a over the tag
// folded through splitmix64 together with the seed and the indices.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>

namespace ttm {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0,
                                    std::uint64_t b = 0) {
  std::uint64_t k = splitmix64_mix(seed + kGolden);
  k = splitmix64_mix(k ^ fnv1a(tag));
  k = splitmix64_mix(k + (a + 1) * kGolden);
  k = splitmix64_mix(k ^ ((b + 1) * 0xD6E8FEB86659FD93ull));
  return k;
}

class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  constexpr std::uint64_t next_u64() { return splitmix64_mix(key_ + (++counter_) * kGolden); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection-sampled (n > 0).
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r = next_u64();
    while (r >= limit) {
      r = next_u64();
    }
    return r % n;
  }

  /// Two independent standard normals via Box-Muller.
  std::pair<double, double> normal_pair() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  constexpr std::uint64_t key() const { return key_; }
  constexpr std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace ttm
