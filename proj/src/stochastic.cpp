#include "burstnet/stochastic.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <iomanip>
#include <limits>

namespace burstnet {

std::int64_t CountState::level_sum(int k) const {
  std::int64_t s = 0;
  for (int m = 0; m < M_; ++m) s += (*this)(k, m);
  return s;
}

std::int64_t CountState::subpop_sum(int m) const {
  std::int64_t s = 0;
  for (int k = 0; k < K_; ++k) s += (*this)(k, m);
  return s;
}

std::int64_t CountState::total() const {
  std::int64_t s = 0;
  for (auto v : X_) s += v;
  return s;
}

MeanState CountState::fractions() const {
  MeanState x(K_, M_);
  const double n = static_cast<double>(total());
  for (int k = 0; k < K_; ++k)
    for (int m = 0; m < M_; ++m) x(k, m) = static_cast<double>((*this)(k, m)) / n;
  return x;
}

namespace {

std::int64_t binomial(std::int64_t n, double p, RngHandle::engine_type& engine) {
  if (n == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  return std::binomial_distribution<std::int64_t>(n, p)(engine);
}

}  // namespace

std::int64_t cascade_in_place(CountState& state, int trigger, double p,
                              RngHandle::engine_type& engine, std::int64_t* rounds) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("cascade: p must lie in [0, 1]");
  const int K = state.levels();
  const int M = state.subpops();
  if (trigger < 0 || trigger >= M) throw std::out_of_range("cascade: trigger subpopulation");
  if (state(K - 1, trigger) < 1)
    throw std::invalid_argument("cascade: trigger subpopulation has no neuron at level K-1");

  std::vector<std::int64_t> fired(static_cast<std::size_t>(M), 0);
  state(K - 1, trigger) -= 1;
  fired[trigger] = 1;
  std::int64_t queue = 1;
  std::int64_t pops = 0;

  while (queue > 0) {
    --queue;
    ++pops;
    // Top level first: every draw sees the counts from before this pop.
    for (int m = 0; m < M; ++m) {
      const std::int64_t b = binomial(state(K - 1, m), p, engine);
      state(K - 1, m) -= b;
      fired[m] += b;
      queue += b;
    }
    for (int k = K - 2; k >= 0; --k) {
      for (int m = 0; m < M; ++m) {
        const std::int64_t b = binomial(state(k, m), p, engine);
        state(k, m) -= b;
        state(k + 1, m) += b;
      }
    }
  }

  std::int64_t size = 0;
  for (int m = 0; m < M; ++m) {
    state(0, m) += fired[m];
    size += fired[m];
  }
  if (rounds) *rounds = pops;
  return size;
}

BurstOutcome cascade(const CountState& state, int trigger, double p, RngHandle& rng) {
  BurstOutcome out;
  out.post_state = state;
  out.size = cascade_in_place(out.post_state, trigger, p, rng.engine(), &out.rounds);
  return out;
}

namespace {

// Promotes one neuron chosen by the exogenous clocks. Returns the burst size.
// `subpop_rate` holds rho_m * N_m and `total_rate` their sum.
std::int64_t promote_one(CountState& state, const StochasticSpec& spec,
                         std::span<const double> subpop_rate, double total_rate,
                         RngHandle::engine_type& engine) {
  const int K = state.levels();
  const int M = state.subpops();
  const double u = std::uniform_real_distribution<double>(0.0, total_rate)(engine);
  int m = 0;
  double acc = subpop_rate[0];
  while (m + 1 < M && (u >= acc || subpop_rate[m] == 0.0)) acc += subpop_rate[++m];
  const std::int64_t n_m = state.subpop_sum(m);
  assert(n_m > 0);
  std::int64_t r = std::uniform_int_distribution<std::int64_t>(0, n_m - 1)(engine);
  int k = 0;
  while (r >= state(k, m)) r -= state(k++, m);
  if (k < K - 1) {
    state(k, m) -= 1;
    state(k + 1, m) += 1;
    return 0;
  }
  return cascade_in_place(state, m, spec.p, engine);
}

struct Rates {
  std::vector<double> per_subpop;
  double total = 0.0;
};

Rates rates_for(const CountState& state, const StochasticSpec& spec) {
  Rates r;
  r.per_subpop.resize(static_cast<std::size_t>(state.subpops()));
  for (int m = 0; m < state.subpops(); ++m) {
    r.per_subpop[m] = spec.base.rho[m] * static_cast<double>(state.subpop_sum(m));
    r.total += r.per_subpop[m];
  }
  if (!(r.total > 0.0)) throw std::invalid_argument("total event rate must be positive");
  return r;
}

}  // namespace

EventOutcome next_event(const CountState& state, const StochasticSpec& spec, RngHandle& rng) {
  const Rates rates = rates_for(state, spec);
  EventOutcome out;
  out.dt = std::exponential_distribution<double>(rates.total)(rng.engine());
  out.new_state = state;
  out.burst_size = promote_one(out.new_state, spec, rates.per_subpop, rates.total, rng.engine());
  return out;
}

RunSummary simulate(const StochasticSpec& spec, const CountState& x0, RunLimits limits,
                    RngHandle& rng, const EventObserver& observer) {
  if (x0.subpops() != spec.base.M || x0.levels() != spec.base.K)
    throw spec_error("initial state shape does not match spec");
  const Rates rates = rates_for(x0, spec);
  std::exponential_distribution<double> wait(rates.total);
  RunSummary out{x0, 0, 0.0};
  double t = 0.0;
  while (out.events < limits.max_events) {
    const double next = t + wait(rng.engine());
    if (next > limits.max_time) break;
    t = next;
    const std::int64_t size =
        promote_one(out.final_state, spec, rates.per_subpop, rates.total, rng.engine());
    ++out.events;
    out.last_time = t;
    if (observer) observer(t, size, out.final_state);
  }
  return out;
}

StochTrace run(const StochasticSpec& spec, const CountState& x0, double T) {
  StochTrace trace;
  trace.T = T;
  RngHandle rng(spec.seed);
  simulate(spec, x0, RunLimits{T, std::numeric_limits<std::uint64_t>::max()}, rng,
           [&](double t, std::int64_t size, const CountState& s) {
             trace.events.push_back({t, size, s});
             if (size >= 1) trace.bursts.push_back({t, size});
           });
  return trace;
}

const CountState& StochTrace::state_at(double t, const CountState& initial) const {
  auto it = std::upper_bound(events.begin(), events.end(), t,
                             [](double v, const TraceEvent& e) { return v < e.t; });
  if (it == events.begin()) return initial;
  return std::prev(it)->state;
}

CountState counts_from_fractions(const MeanState& x, std::span<const double> alpha,
                                 std::span<const std::int64_t> sizes) {
  const int K = x.levels();
  const int M = x.subpops();
  CountState c(K, M);
  for (int m = 0; m < M; ++m) {
    std::int64_t upper = 0;
    for (int k = 1; k < K; ++k) {
      const double share = alpha[m] > 0.0 ? x(k, m) / alpha[m] : 0.0;
      c(k, m) = std::llround(share * static_cast<double>(sizes[m]));
      upper += c(k, m);
    }
    // Rounding can overshoot by at most K-1; take it back from the top levels.
    for (int k = K - 1; upper > sizes[m] && k >= 1; --k) {
      const std::int64_t take = std::min(c(k, m), upper - sizes[m]);
      c(k, m) -= take;
      upper -= take;
    }
    c(0, m) = sizes[m] - upper;
  }
  return c;
}

CountState equilibrium_counts(const StochasticSpec& spec) {
  return counts_from_fractions(equilibrium(spec.base), spec.base.alpha, spec.sizes());
}

void check_conservation(const CountState& state, std::span<const std::int64_t> sizes) {
  for (int m = 0; m < state.subpops(); ++m) {
    if (state.subpop_sum(m) != sizes[m])
      throw std::logic_error("subpopulation " + std::to_string(m) + " total changed");
    for (int k = 0; k < state.levels(); ++k)
      if (state(k, m) < 0) throw std::logic_error("negative occupancy");
  }
}

namespace {

void write_state_header(std::ostream& os, int K, int M, const char* prefix) {
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) os << ',' << prefix << '_' << k << '_' << m;
  os << '\n';
}

}  // namespace

void write_trace_csv(std::ostream& os, const StochTrace& trace, const CountState& x0,
                     const nlohmann::json& meta) {
  os << "# " << meta.dump() << '\n';
  os << "t,burst_size";
  write_state_header(os, x0.levels(), x0.subpops(), "X");
  os << std::setprecision(17);
  auto row = [&](double t, std::int64_t size, const CountState& s) {
    os << t << ',' << size;
    for (auto v : s.data()) os << ',' << v;
    os << '\n';
  };
  row(0.0, 0, x0);
  for (const auto& e : trace.events) row(e.t, e.burst_size, e.state);
}

void write_burst_csv(std::ostream& os, const StochTrace& trace, std::int64_t min_burst,
                     const nlohmann::json& meta) {
  os << "# " << meta.dump() << '\n';
  os << "t,burst_size\n" << std::setprecision(17);
  for (const auto& b : trace.bursts)
    if (b.size >= min_burst) os << b.t << ',' << b.size << '\n';
}

}  // namespace burstnet
