#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "burstnet/model.hpp"

namespace burstnet {

/// Seeded 64-bit Mersenne Twister. Same seed and same call sequence give
/// bit-identical draws.
class RngHandle {
 public:
  using engine_type = std::mt19937_64;

  explicit RngHandle(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  engine_type& engine() { return engine_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

  /// Independent stream for a sweep cell, keyed by (seed, keys...).
  static RngHandle derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

 private:
  std::uint64_t seed_;
  engine_type engine_;
};

/// Uniform point on {w >= 0, sum w = 1} of dimension n, by normalized
/// exponentials.
std::vector<double> sample_simplex(std::size_t n, RngHandle& rng);

/// Per subpopulation a uniform point of the K-simplex, scaled by alpha_m.
MeanState sample_state(const ModelSpec& spec, RngHandle& rng);

/// Random spec with Dirichlet(1) alpha (each alpha_m >= alpha_floor) and
/// log-uniform rho in [rho_lo, rho_hi].
ModelSpec sample_spec(int K, int M, double beta, RngHandle& rng, double rho_lo = 0.5,
                      double rho_hi = 2.0, double alpha_floor = 1e-3);

}  // namespace burstnet
