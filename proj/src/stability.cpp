#include "burstnet/stability.hpp"

#include <cmath>
#include <Eigen/SVD>

namespace burstnet {

bool in_F_alpha(const MeanState& x) {
  if (x.levels() != 2) throw std::invalid_argument("in_F_alpha: requires K = 2");
  for (int m = 0; m < x.subpops(); ++m)
    if (!(x(1, m) < 0.5 * (x(0, m) + x(1, m)))) return false;
  return true;
}

double contraction_g(double z) { return (1.0 + z) * std::exp(-z); }

double g_contraction_modulus(double beta) {
  if (!(beta > 0.0)) throw std::domain_error("g_contraction_modulus: beta must be positive");
  return contraction_g(beta * s_star_boundary(beta));
}

int n_star(double beta) {
  if (!(beta > 2.0)) throw std::domain_error("n_star: requires beta > 2");
  const double h = g_contraction_modulus(beta);
  int n = 1;
  double power = h;
  while (!(power < 0.5)) {
    power *= h;
    ++n;
  }
  return n;
}

double restricted_spectral_norm(const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.cols();
  if (n <= 1) return 0.0;
  const Eigen::MatrixXd P =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A * P);
  return svd.singularValues()(0);
}

double restricted_spectral_norm_power(const Eigen::MatrixXd& A, double tol, int max_iter) {
  const Eigen::Index n = A.cols();
  if (n <= 1) return 0.0;
  auto project = [](Eigen::VectorXd& v) { v.array() -= v.mean(); };
  // Deterministic start with components along every zero-sum direction.
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.5 * std::sin(1.0 + 3.0 * static_cast<double>(i));
  project(v);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd w = A.transpose() * (A * v);
    project(w);
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    if (std::abs(next - lambda) <= tol * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(lambda);
}

StretchReport stopped_flow_jacobian(const MeanState& x0, const ModelSpec& spec) {
  if (spec.K != 2 || x0.levels() != 2)
    throw std::invalid_argument("stopped_flow_jacobian: requires K = 2");
  const auto tau = hitting_time(x0, spec);
  if (!tau) throw no_burst_reachable("no burst reachable: flow stays below 1/beta");

  const int M = spec.M;
  StretchReport r;
  r.tau = *tau;
  Eigen::VectorXd decay(M);
  Eigen::VectorXd weight(M);
  for (int m = 0; m < M; ++m) {
    decay(m) = std::exp(-2.0 * spec.rho[m] * r.tau);
    const double a = x0(0, m) + x0(1, m);
    weight(m) = spec.rho[m] * (0.5 * a - x0(1, m)) * decay(m);
  }
  r.c = weight / weight.sum();
  r.MM = -r.c * decay.transpose();
  r.MM.diagonal() += decay;
  r.restricted_norm = restricted_spectral_norm(r.MM);
  r.g_modulus = g_contraction_modulus(spec.beta);
  r.product = r.restricted_norm * r.g_modulus;
  return r;
}

double beta_threshold(int M) {
  if (M < 1) throw std::domain_error("beta_threshold: M must be at least 1");
  const double stretch = 1.0 + std::sqrt(static_cast<double>(M)) / 2.0;
  auto holds = [&](double beta) { return g_contraction_modulus(beta) * stretch < 1.0; };
  double lo = 2.0;
  double hi = 4.0;
  while (!holds(hi)) {
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > 1e-7) {
    const double mid = 0.5 * (lo + hi);
    (holds(mid) ? hi : lo) = mid;
  }
  return hi;
}

std::string to_string(ConvergenceClass c) {
  switch (c) {
    case ConvergenceClass::MonotoneConvergent: return "monotone";
    case ConvergenceClass::NonMonotoneConvergent: return "nonmonotone";
    case ConvergenceClass::NonConvergent: return "nonconvergent";
  }
  return "unknown";
}

LimitCycleResult find_limit_cycle(const ModelSpec& spec, const MeanState& x0, double tol,
                                  int max_iter) {
  if (spec.K != 2) throw std::invalid_argument("find_limit_cycle: requires K = 2");
  LimitCycleResult out;
  MeanState x = x0;
  if (classify(x, spec.beta) == Region::Burst) {
    const auto jump = burst_map(x, spec);
    if (!(jump.size > 0.0))
      throw no_burst_reachable("no burst reachable: boundary contact with zero burst size");
    x = jump.state;
    out.iterates.push_back(x);
    ++out.iterations;
  }
  bool converged = false;
  while (out.iterations < max_iter) {
    MeanState next = return_map(x, spec);
    ++out.iterations;
    const double step = distance(next, x);
    out.iterates.push_back(next);
    x = std::move(next);
    if (step < tol) {
      converged = true;
      break;
    }
  }
  out.fixed_point = x;
  for (std::size_t i = 0; i < out.iterates.size(); ++i) {
    if (in_F_alpha(out.iterates[i])) {
      out.entered_F = static_cast<int>(i) + 1;
      break;
    }
  }
  if (!converged) {
    out.cls = ConvergenceClass::NonConvergent;
    return out;
  }

  bool overshoot = false;
  for (int m = 0; m < spec.M && !overshoot; ++m) {
    int sign = 0;
    for (const auto& it : out.iterates) {
      const double d = it(1, m) - out.fixed_point(1, m);
      if (std::abs(d) <= kOvershootTol) continue;
      const int s = d > 0.0 ? 1 : -1;
      if (sign != 0 && s != sign) {
        overshoot = true;
        break;
      }
      sign = s;
    }
  }
  out.cls = overshoot ? ConvergenceClass::NonMonotoneConvergent
                      : ConvergenceClass::MonotoneConvergent;
  return out;
}

int bursts_to_reach(const LimitCycleResult& run, const MeanState& target, double tol) {
  const int n = static_cast<int>(run.iterates.size());
  int last_far = -1;
  for (int i = 0; i < n; ++i)
    if (distance(run.iterates[i], target) >= tol) last_far = i;
  if (last_far == n - 1) return -1;
  return last_far + 2;
}

}  // namespace burstnet
