#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace hdl {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed derivation: stream i of a root seed does not depend on
/// how many other streams were drawn or in which order.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(splitmix64(root) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(root, a), b);
}

inline void fill_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : out) v = n(rng);
}

}  // namespace hdl
