#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "burstnet/meanfield.hpp"
#include "burstnet/model.hpp"
#include "burstnet/stability.hpp"
#include "burstnet/stochastic.hpp"

namespace burstnet::experiments {

/// Raised for malformed or inconsistent run configurations (exit code 2).
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a checked bound fails (exit code 3).
class bound_violation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBound = 3;

/// Parses JSON text; parse errors are rethrown as config_error with line and
/// column.
nlohmann::json parse_config(const std::string& text, const std::string& origin = "<config>");
nlohmann::json load_config(const std::filesystem::path& path);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
/// rethrown on the caller after all threads join (lowest index wins).
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

double median(std::vector<double> v);

// ---------------------------------------------------------------------------
// Stochastic vs mean-field comparison

struct CompareOptions {
  std::vector<std::int64_t> n_list{500, 1000, 2000, 4000};
  int seeds = 20;
  std::uint64_t seed = 0;
  /// NaN selects the defaults: epsilon = 0.05 / rho_min, gamma = b_min / 2,
  /// T halfway between the third and fourth deterministic bursts.
  double T = std::numeric_limits<double>::quiet_NaN();
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
  int grid_points = 1000;
  TimeChange time_change = TimeChange::mean_burst_size;
  /// Initial fractions; all neurons at level 0 when empty.
  std::optional<MeanState> x0;
  int workers = 1;
};

struct ComparisonRun {
  std::int64_t N = 0;
  int seed_index = 0;
  std::uint64_t seed = 0;
  int n_det = 0;
  int n_stoch = 0;
  bool count_mismatch = false;
  std::vector<double> stoch_times;
  std::vector<double> det_times;
  std::vector<std::int64_t> big_burst_sizes;
  std::vector<double> burst_time_errors;  ///< |T_j - tau_j| over min(n_stoch, n_det) pairs
  double max_burst_time_error = std::numeric_limits<double>::quiet_NaN();
  /// NaN when the burst counts disagree.
  double sup_distance = std::numeric_limits<double>::quiet_NaN();
};

struct ComparisonReport {
  std::int64_t N = 0;
  double T = 0.0;
  double epsilon = 0.0;
  double gamma = 0.0;
  double b_min = 0.0;
  std::vector<ComparisonRun> runs;
  int mismatched = 0;
  double median_burst_time_error = 0.0;
  double median_sup_distance = 0.0;
  double mean_big_burst_fraction = 0.0;
  double stderr_big_burst_fraction = 0.0;
  int n_big_bursts = 0;
};

/// Resolved timing parameters for one N.
struct CompareSetup {
  ModelSpec spec_N;  ///< spec with alpha replaced by N_m / N
  CountState X0;
  MeanState x0;      ///< X0 / N
  HybridTrajectory det;
  double T = 0.0;
  double epsilon = 0.0;
  double gamma = 0.0;
  double b_min = 0.0;
};

CompareSetup prepare_compare(const ModelSpec& spec, std::int64_t N, const CompareOptions& opts);

ComparisonRun compare_once(const CompareSetup& setup, std::int64_t N, int seed_index,
                           std::uint64_t seed, int grid_points);

std::vector<ComparisonReport> compare(const ModelSpec& spec, const CompareOptions& opts);

// ---------------------------------------------------------------------------
// Phase diagram

struct PhaseDiagramRow {
  double beta = 0.0;
  int M = 0;
  int n_initial_conditions = 0;
  double fraction_monotone = 0.0;
  double fraction_nonmonotone = 0.0;
  double fraction_nonconvergent = 0.0;
  double mean_iterations = 0.0;
  int max_iterations = 0;
};

struct PhaseOptions {
  std::vector<int> m_list{5, 10};
  double beta_min = 2.005;
  double beta_max = 2.5;
  int beta_steps = 50;
  int n_ic = 1000;
  std::uint64_t seed = 0;
  double tol = 1e-12;
  int max_iter = 20000;
  int workers = 1;
};

std::vector<double> beta_grid(double lo, double hi, int steps);

/// One random rate vector and population split per M, shared across the beta grid.
ModelSpec phase_spec(int M, double beta, std::uint64_t seed);

std::vector<PhaseDiagramRow> phase_diagram(const PhaseOptions& opts);

// ---------------------------------------------------------------------------
// Stretch bound sweep

struct StretchRow {
  int trial = 0;
  int M = 0;
  double beta = 0.0;
  double tau = 0.0;
  double restricted_norm = 0.0;
  double restricted_norm_power = 0.0;
  double bound = 0.0;
  double g_modulus = 0.0;
  double product = 0.0;
};

struct SweepOptions {
  std::vector<int> m_list{2, 3, 5, 10, 20};
  int trials = 200;  ///< per M
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Random K=2 spec with beta in (2, 10] and a state drawn uniformly from F_alpha.
StretchRow stretch_trial(int M, int trial, std::uint64_t seed);

std::vector<StretchRow> stability_sweep(const SweepOptions& opts);

/// Empty when every row satisfies the bounds, else one message per failure.
std::vector<std::string> check_stretch_bounds(const std::vector<StretchRow>& rows);

// ---------------------------------------------------------------------------
// Writers. Every file starts with a '#'-prefixed JSON metadata line.

void write_compare(const std::filesystem::path& dir, const std::vector<ComparisonReport>& reports,
                   const nlohmann::json& meta);
void write_phase_diagram(const std::filesystem::path& file,
                         const std::vector<PhaseDiagramRow>& rows, const nlohmann::json& meta);
void write_stability_sweep(const std::filesystem::path& file, const std::vector<StretchRow>& rows,
                           const nlohmann::json& meta);
void write_s_star_curve(const std::filesystem::path& file, const std::vector<double>& betas,
                        const nlohmann::json& meta);

/// Writes the convergence table ic_index, burst_index, x_0_0 ... for return-map
/// iterates from several initial conditions.
void write_return_map_iterates(const std::filesystem::path& file,
                               const std::vector<LimitCycleResult>& runs,
                               const nlohmann::json& meta);

// ---------------------------------------------------------------------------
// Config-driven simulate

/// Mean-field or stochastic runs described by a config object. Returns the
/// list of files written.
std::vector<std::filesystem::path> simulate_from_config(const nlohmann::json& config,
                                                        const std::filesystem::path& out_dir,
                                                        std::optional<std::uint64_t> seed_override);

/// Model spec from a config object. Missing alpha/rho are drawn from `seed`.
ModelSpec spec_from_config(const nlohmann::json& config, std::uint64_t seed);

}  // namespace burstnet::experiments
