#pragma once

// Portable seeded random numbers. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the distributions below are implemented
// here (53-bit uniforms, Box-Muller normals, rejection-sampled integers)
// because the standard library's distributions are not portable across
// implementations.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "gridgp/grid_data.hpp"

namespace gridgp {

class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal (Box-Muller, one value per call).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Vector normal_vector(std::size_t n);
  /// k distinct indices from [0, n) chosen uniformly without replacement,
  /// sorted ascending (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a base seed and a salt (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

} // namespace gridgp
