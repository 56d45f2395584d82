#ifndef MMFW_RNG_HPP
#define MMFW_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace mmfw {

// Distribution helpers with pinned-down arithmetic, so seeded runs are
// reproducible across standard library implementations.

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline double normal01(std::mt19937_64& rng) {
  // Box-Muller; discards the second variate for simplicity.
  double u1 = uniform01(rng);
  while (u1 == 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step keeps derived streams decorrelated.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mmfw

#endif  // MMFW_RNG_HPP
