#pragma once

// Seed derivation and the counter-based generator behind every random draw.
//
//   mix64(z)          SplitMix64 finalizer (Steele, Lea, Flood 2014).
//   fnv1a64(label)    64-bit FNV-1a hash of a stream label.
//   derive_seed(s, label, i) = mix64(mix64(s ^ fnv1a64(label)) + (i + 1) * G),
//                     G = 0x9E3779B97F4A7C15.
//   CounterRng(key)   k-th output (k = 1, 2, ...) is mix64(key + k * G).
//
// Uniforms take the top 53 bits; normals use Box-Muller pairs. There is no
// global generator state.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace pdenoise {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view label, std::uint64_t index = 0) {
  return mix64(mix64(run_seed ^ fnv1a64(label)) + (index + 1) * kGolden);
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pdenoise
