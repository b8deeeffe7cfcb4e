#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <random>
#include <vector>

namespace hashparse {

// Constituent boundaries, 0-based and inclusive on both ends.
struct Span {
  int left = 0;
  int right = 0;

  int width() const { return right - left + 1; }
  auto operator<=>(const Span&) const = default;
};

// K-bit code, one entry per bit, each +1 or -1.
using Code = std::vector<int8_t>;

enum class Order { zero, first };

enum class Execution { serial, parallel };

// splitmix64 finalizer; used to derive independent seeds from tuples.
inline uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t a, uint64_t b, uint64_t c = 0) {
  return mix_seed(mix_seed(mix_seed(a) ^ b) ^ c);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal draw via Box-Muller; the libstdc++ distribution objects
// are not guaranteed to be stable across library versions.
inline double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace hashparse
