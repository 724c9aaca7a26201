#pragma once

#include <cstdint>
#include <random>

#include "dbmt/types.hpp"

namespace dbmt {

/// Pseudo-random stream. Not thread-safe: give every thread its own instance.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform draw on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  Vector gaussian_vector(Eigen::Index n) {
    Vector out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = gaussian();
    return out;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Stream seed for item `index` of a run seeded with `seed` (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace dbmt
