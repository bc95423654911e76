#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fedre {

using Rng = std::mt19937_64;

// splitmix64 finalizer; turns (base, stream) into well-separated seeds so
// each client/seed owns an independent stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

// Laplace(0, 1) via inverse CDF.
inline double standard_laplace(Rng& rng) {
  double u = uniform01(rng) - 0.5;
  while (u == -0.5) u = uniform01(rng) - 0.5;
  return (u < 0 ? 1.0 : -1.0) * std::log(1.0 - 2.0 * std::abs(u));
}

}  // namespace fedre
