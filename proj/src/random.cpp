#include "burstnet/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace burstnet {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngHandle RngHandle::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t state = seed;
  std::uint64_t mixed = splitmix64(state);
  for (std::uint64_t key : keys) {
    state ^= key + 0x632be59bd9b4e019ULL;
    mixed ^= splitmix64(state);
  }
  return RngHandle(mixed);
}

std::vector<double> sample_simplex(std::size_t n, RngHandle& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& v : w) {
    v = expo(rng.engine());
    total += v;
  }
  for (auto& v : w) v /= total;
  return w;
}

MeanState sample_state(const ModelSpec& spec, RngHandle& rng) {
  MeanState x(spec.K, spec.M);
  for (int m = 0; m < spec.M; ++m) {
    const auto w = sample_simplex(static_cast<std::size_t>(spec.K), rng);
    for (int k = 1; k < spec.K; ++k) x(k, m) = spec.alpha[m] * w[k];
  }
  x.close_level_zero(spec.alpha);
  return x;
}

ModelSpec sample_spec(int K, int M, double beta, RngHandle& rng, double rho_lo, double rho_hi,
                      double alpha_floor) {
  ModelSpec spec;
  spec.K = K;
  spec.M = M;
  spec.beta = beta;
  if (M == 1) {
    spec.alpha = {1.0};
  } else {
    do {
      spec.alpha = sample_simplex(static_cast<std::size_t>(M), rng);
    } while (*std::min_element(spec.alpha.begin(), spec.alpha.end()) < alpha_floor);
    // Put the rounding residue on the largest entry so the sum is 1 to 1e-15.
    const double total = std::accumulate(spec.alpha.begin(), spec.alpha.end(), 0.0);
    auto big = std::max_element(spec.alpha.begin(), spec.alpha.end());
    *big += 1.0 - total;
  }
  spec.rho.resize(M);
  const double llo = std::log(rho_lo);
  const double lhi = std::log(rho_hi);
  for (auto& r : spec.rho) r = std::exp(rng.uniform(llo, lhi));
  return spec;
}

}  // namespace burstnet
