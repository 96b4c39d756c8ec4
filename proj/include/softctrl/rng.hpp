#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

namespace softctrl {

// splitmix64 mix; used to derive independent sub-seeds from one run seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = base;
  for (unsigned char c : tag) h = mix_seed(h ^ c);
  return mix_seed(h ^ index);
}

// Uniform in [0, 1) with 53 random bits; identical on every platform,
// unlike std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller pair of independent standard normals. Stateless (no cached
// spare), so draws are reproducible regardless of call interleaving.
inline std::pair<double, double> gaussian_pair(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

inline double gaussian(std::mt19937_64& rng) { return gaussian_pair(rng).first; }

}  // namespace softctrl
