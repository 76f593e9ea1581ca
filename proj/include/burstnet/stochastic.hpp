#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "burstnet/model.hpp"
#include "burstnet/random.hpp"

namespace burstnet {

/// Occupancy counts X(k, m) of the finite network, level-major like MeanState.
class CountState {
 public:
  CountState() = default;
  CountState(int K, int M) : K_(K), M_(M), X_(static_cast<std::size_t>(K) * M, 0) {}

  int levels() const { return K_; }
  int subpops() const { return M_; }

  std::int64_t& operator()(int k, int m) { return X_[static_cast<std::size_t>(k) * M_ + m]; }
  std::int64_t operator()(int k, int m) const { return X_[static_cast<std::size_t>(k) * M_ + m]; }

  std::span<const std::int64_t> data() const { return X_; }

  /// Y_k = sum_m X(k, m).
  std::int64_t level_sum(int k) const;
  std::int64_t subpop_sum(int m) const;
  std::int64_t total() const;

  /// X / N as fractions of the whole network.
  MeanState fractions() const;

  friend bool operator==(const CountState&, const CountState&) = default;

 private:
  int K_ = 0;
  int M_ = 0;
  std::vector<std::int64_t> X_;
};

/// Result of one burst triggered by a neuron crossing from level K-1.
struct BurstOutcome {
  std::int64_t size = 0;  ///< neurons that fired, trigger included
  CountState post_state;  ///< fired neurons are back at level 0
  std::int64_t rounds = 0;  ///< queue pops processed
};

/// Burst cascade in occupancy-count form.
///
/// `state` is the configuration just before the trigger crossed: one of the
/// X(K-1, trigger) neurons is the one that fires first. Queued neurons are
/// processed one at a time; each kicks every neuron that has neither fired
/// nor been queued with probability p, drawn as one Binomial(X(k, m), p) per
/// occupied cell. A kicked neuron at K-1 joins the queue, all others move up
/// one level. When the queue is empty the fired neurons return to level 0 of
/// their own subpopulation.
BurstOutcome cascade(const CountState& state, int trigger, double p, RngHandle& rng);

/// In-place variant used by the event loop. Returns the burst size.
std::int64_t cascade_in_place(CountState& state, int trigger, double p,
                              RngHandle::engine_type& engine, std::int64_t* rounds = nullptr);

struct EventOutcome {
  double dt = 0.0;
  CountState new_state;
  std::int64_t burst_size = 0;
};

/// One Gillespie step: exponential waiting time at total rate
/// sum_m rho_m N_m, subpopulation chosen by rho_m N_m, level by X(k, m) / N_m,
/// then a one-level promotion (and a cascade if the neuron was at K-1).
EventOutcome next_event(const CountState& state, const StochasticSpec& spec, RngHandle& rng);

struct TraceEvent {
  double t = 0.0;
  std::int64_t burst_size = 0;
  CountState state;  ///< post-event state
};

struct BurstRecord {
  double t = 0.0;
  std::int64_t size = 0;
};

struct StochTrace {
  std::vector<TraceEvent> events;
  std::vector<BurstRecord> bursts;  ///< every event with burst_size >= 1
  double T = 0.0;

  /// Right-continuous state at time t; the initial state before the first event.
  const CountState& state_at(double t, const CountState& initial) const;
};

/// Event loop limits: stop before the first event past max_time, or after
/// max_events events, whichever comes first.
struct RunLimits {
  double max_time = std::numeric_limits<double>::infinity();
  std::uint64_t max_events = std::numeric_limits<std::uint64_t>::max();
};

/// Observer called after every event with (time, burst size, post state).
using EventObserver = std::function<void(double, std::int64_t, const CountState&)>;

/// Runs the chain from x0, calling `observer` per event. Returns the final
/// state and the number of events processed.
struct RunSummary {
  CountState final_state;
  std::uint64_t events = 0;
  double last_time = 0.0;
};
RunSummary simulate(const StochasticSpec& spec, const CountState& x0, RunLimits limits,
                    RngHandle& rng, const EventObserver& observer);

/// Full trace on [0, T] seeded from spec.seed.
StochTrace run(const StochasticSpec& spec, const CountState& x0, double T);

/// Counts with X(k, m) = round(x(k, m) / alpha_m * N_m) for k >= 1 and the
/// remainder at level 0, so per-subpopulation totals are exactly N_m.
CountState counts_from_fractions(const MeanState& x, std::span<const double> alpha,
                                 std::span<const std::int64_t> sizes);

/// Equilibrium fractions rounded onto the subpopulation sizes.
CountState equilibrium_counts(const StochasticSpec& spec);

/// Throws if any subpopulation total differs from `sizes` or a count is negative.
void check_conservation(const CountState& state, std::span<const std::int64_t> sizes);

/// CSV with columns t, burst_size, X_0_0 ... X_{K-1}_{M-1}, preceded by a
/// '#'-prefixed JSON metadata line.
void write_trace_csv(std::ostream& os, const StochTrace& trace, const CountState& x0,
                     const nlohmann::json& meta);
/// Burst summary: t, burst_size for bursts with size >= min_burst.
void write_burst_csv(std::ostream& os, const StochTrace& trace, std::int64_t min_burst,
                     const nlohmann::json& meta);

}  // namespace burstnet
