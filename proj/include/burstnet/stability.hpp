#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "burstnet/meanfield.hpp"
#include "burstnet/model.hpp"

namespace burstnet {

/// x_{1,m} < alpha_m / 2 for every m, with alpha_m read off the state.
/// Two-level states only.
bool in_F_alpha(const MeanState& x);

/// (1 + z) e^{-z}.
double contraction_g(double z);

/// Modulus of the jump map along zero-sum perturbations on the K=2
/// boundary: g(beta * s*(beta)). Equals 1 for beta <= 2.
double g_contraction_modulus(double beta);

/// Smallest n with g_contraction_modulus(beta)^n < 1/2; requires beta > 2.
int n_star(double beta);

/// Linearization of the stopped flow x(0) -> x_1(tau(x(0))) for K = 2.
struct StretchReport {
  double tau = 0.0;
  Eigen::VectorXd c;
  Eigen::MatrixXd MM;  ///< (MM)_ij = -c_i e^{-2 rho_j tau} + delta_ij e^{-2 rho_i tau}
  double restricted_norm = 0.0;  ///< spectral norm of MM on zero-sum vectors
  double g_modulus = 0.0;
  double product = 0.0;
};

/// Throws no_burst_reachable when the flow from x0 never bursts.
StretchReport stopped_flow_jacobian(const MeanState& x0, const ModelSpec& spec);

/// Largest singular value of A (I - 11^T / n), by SVD.
double restricted_spectral_norm(const Eigen::MatrixXd& A);

/// Same quantity by power iteration on P A^T A P.
double restricted_spectral_norm_power(const Eigen::MatrixXd& A, double tol = 1e-13,
                                      int max_iter = 100000);

/// Smallest beta (to 1e-6) with g_contraction_modulus(beta) * (1 + sqrt(M)/2) < 1.
double beta_threshold(int M);

enum class ConvergenceClass { MonotoneConvergent, NonMonotoneConvergent, NonConvergent };

std::string to_string(ConvergenceClass c);

struct LimitCycleResult {
  MeanState fixed_point;
  int iterations = 0;  ///< return-map applications, the initial jump included
  ConvergenceClass cls = ConvergenceClass::NonConvergent;
  /// Post-burst states H^n(x0), n >= 1, in order.
  std::vector<MeanState> iterates;
  /// First iterate index (1-based) that lies in F_alpha, 0 if none.
  int entered_F = 0;
};

/// Sign changes of x_{1,m} - x*_{1,m} smaller than this are ignored.
inline constexpr double kOvershootTol = 1e-9;

/// Iterates the return map from x0 until successive post-burst states are
/// within tol. A start in the burst region jumps first. The class is decided
/// on the post-burst iterates: any level-1 coordinate whose deviation from
/// the fixed point changes sign (beyond kOvershootTol) makes the run
/// non-monotone.
LimitCycleResult find_limit_cycle(const ModelSpec& spec, const MeanState& x0, double tol,
                                  int max_iter);

/// Number of post-burst iterates needed before every later one stays within
/// `tol` of `target`; -1 if the last iterate is still farther.
int bursts_to_reach(const LimitCycleResult& run, const MeanState& target, double tol);

}  // namespace burstnet
