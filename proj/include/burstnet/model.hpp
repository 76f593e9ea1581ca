#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace burstnet {

/// Thrown for malformed or inconsistent model parameters.
class spec_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameters shared by the finite network and its mean-field limit.
///
/// K voltage levels per neuron, M subpopulations with population fractions
/// `alpha` and exogenous input rates `rho`. `beta` is the coupling in the
/// scaling p*N -> beta.
struct ModelSpec {
  int K = 2;
  int M = 1;
  std::vector<double> alpha;
  std::vector<double> rho;
  double beta = 1.0;

  double rho_min() const;
  double rho_max() const;
};

/// Every violated constraint, one message per violation. Empty means valid.
std::vector<std::string> validate_spec(const ModelSpec& spec);

/// Throws spec_error listing every violation.
void require_valid(const ModelSpec& spec);

/// Shape consistency only (K >= 2, M >= 1, array lengths). Numerical routines
/// call this instead of require_valid so that the degenerate single
/// population case alpha = {1} stays usable.
void require_shape(const ModelSpec& spec);

/// Finite-N network: the model plus network size, pairwise kick probability
/// and RNG seed.
struct StochasticSpec {
  ModelSpec base;
  std::int64_t N = 0;
  double p = 0.0;
  std::uint64_t seed = 0;

  /// Sets p = beta / N.
  static StochasticSpec from_model(const ModelSpec& base, std::int64_t N,
                                   std::uint64_t seed);

  /// Subpopulation sizes, see subpopulation_sizes().
  std::vector<std::int64_t> sizes() const;
};

/// Largest-remainder rounding of alpha_m * N. The result sums to N and each
/// entry is within 1 of alpha_m * N.
std::vector<std::int64_t> subpopulation_sizes(std::span<const double> alpha,
                                              std::int64_t N);

/// Fractions x(k, m) of the network at level k in subpopulation m.
/// Storage is level-major, matching the x_{0,0}, ..., x_{K-1,M-1} column
/// order used in every output file.
class MeanState {
 public:
  MeanState() = default;
  MeanState(int K, int M) : K_(K), M_(M), x_(static_cast<std::size_t>(K) * M, 0.0) {}

  int levels() const { return K_; }
  int subpops() const { return M_; }

  double& operator()(int k, int m) { return x_[static_cast<std::size_t>(k) * M_ + m]; }
  double operator()(int k, int m) const { return x_[static_cast<std::size_t>(k) * M_ + m]; }

  std::span<const double> data() const { return x_; }
  std::span<double> data() { return x_; }

  /// y_k: total mass at level k over all subpopulations.
  double level_sum(int k) const;
  double subpop_sum(int m) const;

  /// Sets x(0, m) = alpha_m - sum_{k>=1} x(k, m) for every m, where alpha_m
  /// is taken from `alpha`.
  void close_level_zero(std::span<const double> alpha);

  friend bool operator==(const MeanState&, const MeanState&) = default;

 private:
  int K_ = 0;
  int M_ = 0;
  std::vector<double> x_;
};

/// Euclidean distance over all K*M coordinates.
double distance(const MeanState& a, const MeanState& b);

/// Nonnegative to -tol_neg and per-subpopulation sums equal alpha_m to tol_sum.
bool on_simplex_slice(const MeanState& x, std::span<const double> alpha,
                      double tol_sum = 1e-10, double tol_neg = 1e-12);

enum class Region { Flow, Burst };

/// Burst iff sum_m x(K-1, m) >= 1/beta.
Region classify(const MeanState& x, double beta);

/// Null vector of the cyclic generator inside the simplex slice:
/// x(k, m) = alpha_m / K.
MeanState equilibrium(const ModelSpec& spec);

/// JSON config document {"K","M","alpha","rho","beta","N"?,"p"?,"seed"?}.
nlohmann::json to_json(const ModelSpec& spec);
nlohmann::json to_json(const StochasticSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& doc);
/// N is required. p defaults to beta/N, seed to 0.
StochasticSpec stochastic_spec_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const MeanState& x);
MeanState mean_state_from_json(const nlohmann::json& doc, int K, int M);

}  // namespace burstnet
