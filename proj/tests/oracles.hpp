#pragma once

// Reference implementations used only by tests. They share no numerical code
// with the library.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// e^A by scaling and squaring with a 40-term Taylor series.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& A) {
  const double norm = A.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  double scale = 1.0;
  while (norm * scale > 0.25) {
    scale *= 0.5;
    ++squarings;
  }
  const Eigen::MatrixXd B = A * scale;
  const auto n = A.rows();
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd sum = term;
  for (int j = 1; j <= 40; ++j) {
    term = term * B / static_cast<double>(j);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// Cyclic generator for one subpopulation: level k moves to k+1 (mod K) at rate rho.
inline Eigen::MatrixXd cyclic_generator(int K, double rho) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(K, K);
  for (int k = 0; k < K; ++k) {
    L(k, k) -= rho;
    L((k + 1) % K, k) += rho;
  }
  return L;
}

/// Levels 0..K-1 feed upward at rate beta, the top level feeds a queue Q
/// (index K). Returns the state at time s started from `levels` with Q = 0.
inline Eigen::VectorXd queue_flow(const std::vector<double>& levels, double beta, double s) {
  const int K = static_cast<int>(levels.size());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(K + 1, K + 1);
  for (int k = 0; k < K; ++k) {
    B(k, k) = -beta;
    B(k + 1, k) = beta;
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(K + 1);
  for (int k = 0; k < K; ++k) v(k) = levels[k];
  return expm(B * s) * v;
}

/// xi_Q(s) - s for aggregated level sums y.
inline double psi_queue(const std::vector<double>& y, double beta, double s) {
  return queue_flow(y, beta, s)(static_cast<Eigen::Index>(y.size())) - s;
}

/// 1 - s - ((beta-1)s + 1) e^{-beta s}.
inline double psi2(double s, double beta) {
  return 1.0 - s - ((beta - 1.0) * s + 1.0) * std::exp(-beta * s);
}

/// Root of psi2 on (0, 1) by bisection for beta > 2.
inline double s_star2(double beta) {
  double lo = 1e-8;
  double hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (psi2(mid, beta) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Two-level stopped flow. Level-1 coordinates x1 with fixed subpopulation
/// sizes a; returns level-1 coordinates at the first time the sum reaches
/// 1/beta, and the time through `tau`.
inline std::vector<double> stopped_flow2(const std::vector<double>& x1, const std::vector<double>& a,
                                         const std::vector<double>& rho, double beta,
                                         double* tau = nullptr) {
  const std::size_t M = x1.size();
  auto at = [&](double t) {
    std::vector<double> y(M);
    for (std::size_t m = 0; m < M; ++m)
      y[m] = 0.5 * a[m] - (0.5 * a[m] - x1[m]) * std::exp(-2.0 * rho[m] * t);
    return y;
  };
  auto gap = [&](double t) {
    double s = 0.0;
    for (double v : at(t)) s += v;
    return s - 1.0 / beta;
  };
  double lo = 0.0;
  double hi = 1.0;
  while (gap(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
  }
  while (true) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (gap(mid) < 0.0 ? lo : hi) = mid;
  }
  if (tau) *tau = hi;
  return at(hi);
}

// ---------------------------------------------------------------------------
// Exact burst distribution for small networks by enumerating the
// simultaneous-round definition: every unfired neuron receives
// Binomial(|Q_u|, p) kicks per round and climbs that many levels, firing
// when it reaches K.

struct BurstKey {
  std::int64_t size;
  std::vector<std::int64_t> post;  // level-major K x M counts
  bool operator<(const BurstKey& o) const {
    return size != o.size ? size < o.size : post < o.post;
  }
};

using BurstLaw = std::map<BurstKey, double>;

inline double binom_pmf(int n, int k, double p) {
  if (k < 0 || k > n) return 0.0;
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)) *
         std::pow(p, k) * std::pow(1.0 - p, n - k);
}

namespace detail {

inline void enumerate_rounds(int K, int M, std::vector<std::int64_t> S,
                             std::vector<std::int64_t> fired, std::int64_t q, double p,
                             double weight, BurstLaw& law) {
  if (q == 0) {
    BurstKey key;
    key.size = 0;
    for (auto f : fired) key.size += f;
    key.post = S;
    for (int m = 0; m < M; ++m) key.post[m] += fired[m];
    law[key] += weight;
    return;
  }
  // Per-neuron outcome probabilities: climb by z < K - k, or fire.
  std::vector<double> climb(static_cast<std::size_t>(K), 0.0);
  for (int z = 0; z < K; ++z) climb[z] = binom_pmf(static_cast<int>(q), z, p);

  // Walk the cells (k, m) and distribute each cell's neurons over outcomes.
  struct Partial {
    std::vector<std::int64_t> S;
    std::vector<std::int64_t> fired;
    std::int64_t queued;
    double w;
  };
  std::vector<Partial> frontier{{std::vector<std::int64_t>(S.size(), 0), fired, 0, weight}};
  for (int k = 0; k < K; ++k) {
    for (int m = 0; m < M; ++m) {
      const int n = static_cast<int>(S[static_cast<std::size_t>(k) * M + m]);
      if (n == 0) continue;
      const int classes = K - k + 1;  // z = 0 .. K-k-1 stay, last class fires
      std::vector<double> probs(static_cast<std::size_t>(classes));
      double stay = 0.0;
      for (int z = 0; z < K - k; ++z) {
        probs[z] = climb[z];
        stay += climb[z];
      }
      probs[classes - 1] = std::max(0.0, 1.0 - stay);
      std::vector<Partial> next;
      std::vector<int> counts(static_cast<std::size_t>(classes), 0);
      std::function<void(int, int, double)> split = [&](int c, int left, double w) {
        if (c == classes - 1) {
          counts[c] = left;
          const double pw = w * std::pow(probs[c], left);
          if (pw == 0.0 && left > 0) return;
          for (const auto& part : frontier) {
            Partial np = part;
            np.w *= pw;
            for (int z = 0; z < K - k; ++z)
              np.S[static_cast<std::size_t>(k + z) * M + m] += counts[z];
            np.fired[m] += counts[classes - 1];
            np.queued += counts[classes - 1];
            next.push_back(std::move(np));
          }
          return;
        }
        double coef = 1.0;
        for (int r = 0; r <= left; ++r) {
          counts[c] = r;
          // multinomial coefficient built incrementally: C(left, r)
          const double pw = w * coef * std::pow(probs[c], r);
          if (pw > 0.0 || r == 0) split(c + 1, left - r, pw);
          coef = coef * (left - r) / (r + 1);
        }
      };
      split(0, n, 1.0);
      frontier = std::move(next);
    }
  }
  for (auto& part : frontier)
    if (part.w > 0.0) enumerate_rounds(K, M, part.S, part.fired, part.queued, p, part.w, law);
}

}  // namespace detail

/// Law of (size, post-state) when the trigger neuron of subpopulation
/// `trigger` fires and the rest of the network sits at `S` (level-major
/// K x M counts, trigger excluded).
inline BurstLaw burst_law(int K, int M, const std::vector<std::int64_t>& S, int trigger, double p) {
  BurstLaw law;
  std::vector<std::int64_t> fired(static_cast<std::size_t>(M), 0);
  fired[trigger] = 1;
  detail::enumerate_rounds(K, M, S, fired, 1, p, 1.0, law);
  return law;
}

}  // namespace oracle
