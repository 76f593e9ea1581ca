#pragma once

#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "burstnet/model.hpp"

namespace burstnet {

/// Raised when the flow from a state never reaches the burst region, or
/// reaches it only tangentially so that the jump has size zero.
class no_burst_reachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Time parametrization of the flow between bursts.
///
/// `unit` flows by L directly. `mean_burst_size` speeds the flow up by the
/// mean size 1/(1 - beta*y_{K-1}) of a subcritical burst, which is the time
/// change under which the finite network converges when all rates are equal. Orbits, burst states and burst sizes do not depend on the choice.
enum class TimeChange { unit, mean_burst_size };

/// P(Poisson(lambda) >= i) for i >= 1.
double poisson_tail(double lambda, int i);

/// Queue balance -s + sum_{i=1..K} y_{K-i} P(Poisson(s*beta) >= i).
double psi(const MeanState& x, double s, double beta);

/// First positive root of psi(x, .), or 0 when psi is not positive just
/// right of 0.
double s_star(const MeanState& x, double beta);

/// s* on the K=2 boundary sum_m x_{1,m} = 1/beta; depends on beta only.
double s_star_boundary(double beta);

/// e^{tL} x.
MeanState flow(const MeanState& x, double t, const ModelSpec& spec);

/// First t > 0 at which sum_m x_{K-1,m}(t) reaches 1/beta; nullopt if the
/// flow stays below the threshold. The returned time is the upper end of the
/// final bracket, so flow(x, tau) lies in the burst region.
std::optional<double> hitting_time(const MeanState& x, const ModelSpec& spec);

struct JumpResult {
  MeanState state;
  double size = 0.0;
};

/// Jump map G: applies e^{beta s* M} to levels 1..K-1 and returns the fired
/// mass to level 0.
JumpResult burst_map(const MeanState& x, const ModelSpec& spec);

/// H(x) = G(e^{tau L} x).
MeanState return_map(const MeanState& x, const ModelSpec& spec);

/// Physical time elapsed while flowing for unit-time length u under the
/// mean-burst-size time change: integral of 1 - beta*y_{K-1}.
double physical_duration(const MeanState& x, double u, const ModelSpec& spec);

/// Inverse of physical_duration in u, searched on [0, u_max]; returns u_max
/// when `physical` is not reached before it.
double flow_time_for(const MeanState& x, double physical, const ModelSpec& spec,
                     double u_max = std::numeric_limits<double>::infinity());

struct Horizon {
  double max_time = std::numeric_limits<double>::infinity();
  int max_bursts = std::numeric_limits<int>::max();

  /// 200 bursts or t = 1000 / rho_min.
  static Horizon defaults(const ModelSpec& spec);
};

struct FlowSegment {
  double start_time = 0.0;
  MeanState start_state;
  double end_time = 0.0;  ///< infinity if the flow never bursts
  double flow_length = 0.0;  ///< unit-time length of the segment
  std::optional<MeanState> pre_burst;  ///< state on the boundary at end_time
};

struct HybridTrajectory {
  std::vector<FlowSegment> segments;
  std::vector<double> burst_times;
  std::vector<double> burst_sizes;
  std::vector<MeanState> post_burst_states;
  TimeChange time_change = TimeChange::unit;
  /// The flow touched the boundary where s* = 0; the hybrid system has no
  /// continuation there and the run stops.
  bool stalled = false;

  /// State at time t (right-continuous at burst times).
  MeanState state_at(double t, const ModelSpec& spec) const;
};

/// Alternates flow, hitting time and jump until the horizon. A start in the
/// burst region jumps at t = 0.
HybridTrajectory hybrid_run(const MeanState& x0, const ModelSpec& spec, Horizon horizon,
                            TimeChange time_change = TimeChange::unit);

/// Columns segment_index, t_start, t_end, tau_flag, s_star, x_0_0 ... One
/// tau_flag = 0 row per segment start and one tau_flag = 1 row per pre-burst
/// state.
void write_trajectory_csv(std::ostream& os, const HybridTrajectory& traj,
                          const nlohmann::json& meta);

/// Dense samples t, x_0_0 ... on a uniform grid of step dt over [0, t_end].
void write_samples_csv(std::ostream& os, const HybridTrajectory& traj, const ModelSpec& spec,
                       double dt, double t_end, const nlohmann::json& meta);

namespace detail {

/// Closed-form K=2 flow x_1(t) = a/2 - (a/2 - x_1(0)) e^{-2 rho t}.
MeanState flow_two_level(const MeanState& x, double t, const ModelSpec& spec);
/// Wrapped Poisson weights applied per subpopulation, any K.
MeanState flow_wrapped_poisson(const MeanState& x, double t, const ModelSpec& spec);
/// Jump with a given burst size s (alpha re-derived from the state).
MeanState jump_with_size(const MeanState& x, double s, double beta);
/// f(t) = sum_m x_{K-1,m}(t) - 1/beta.
double threshold_gap(const MeanState& x, double t, const ModelSpec& spec);

}  // namespace detail

}  // namespace burstnet
