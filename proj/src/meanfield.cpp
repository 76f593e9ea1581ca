#include "burstnet/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>

namespace burstnet {

double poisson_tail(double lambda, int i) {
  if (i <= 0) return 1.0;
  if (!(lambda > 0.0)) return 0.0;
  if (lambda < static_cast<double>(i) + 1.0) {
    // Upper series; terms decrease from the first one.
    double term = std::exp(-lambda + i * std::log(lambda) - std::lgamma(i + 1.0));
    double sum = 0.0;
    for (int j = i; term > 1e-300; ++j) {
      sum += term;
      if (term < 1e-18 * sum) break;
      term *= lambda / (j + 1);
    }
    return sum;
  }
  double term = std::exp(-lambda);
  double lower = 0.0;
  for (int j = 0; j < i; ++j) {
    lower += term;
    term *= lambda / (j + 1);
  }
  return 1.0 - lower;
}

namespace {

// P(Po >= 1) and P(Po >= 2) without cancellation at small lambda.
inline void two_tails(double lambda, double& t1, double& t2) {
  if (lambda > 0.5) {
    const double e = std::exp(-lambda);
    t1 = 1.0 - e;
    t2 = t1 - lambda * e;
    return;
  }
  t1 = -std::expm1(-lambda);
  t2 = poisson_tail(lambda, 2);
}

inline double psi_from_sums(std::span<const double> y, double s, double beta) {
  const int K = static_cast<int>(y.size());
  const double lambda = s * beta;
  if (K == 2) {
    double t1, t2;
    two_tails(lambda, t1, t2);
    return -s + y[1] * t1 + y[0] * t2;
  }
  double q = 0.0;
  for (int i = 1; i <= K; ++i) q += y[K - i] * poisson_tail(lambda, i);
  return q - s;
}

std::vector<double> level_sums(const MeanState& x) {
  std::vector<double> y(static_cast<std::size_t>(x.levels()));
  for (int k = 0; k < x.levels(); ++k) y[k] = x.level_sum(k);
  return y;
}

constexpr double kBoundaryTol = 1e-9;
constexpr double kScanStep = 1e-3;

double s_star_from_sums(std::span<const double> y, double beta) {
  const int K = static_cast<int>(y.size());
  const double top = y[K - 1];
  const double slope0 = beta * top - 1.0;
  if (slope0 < -kBoundaryTol) return 0.0;
  if (slope0 <= kBoundaryTol) {
    // Tangent at the origin: positive just right of 0 only if convex there.
    const double curvature0 = beta * beta * (y[K - 2] - top);
    if (curvature0 <= 0.0) return 0.0;
  }
  auto f = [&](double s) { return psi_from_sums(y, s, beta); };

  double lo = kScanStep;
  while (f(lo) <= 0.0) {
    lo *= 0.5;
    if (lo < 1e-14) return 0.0;
  }
  double hi;
  if (K == 2) {
    // psi is unimodal on (0, inf) for K = 2, so any sign change right of a
    // positive point is the first root.
    hi = 1.0;
    while (f(hi) > 0.0) {
      hi += kScanStep;
      if (hi > 2.0) throw std::logic_error("s_star: psi positive beyond s = 2");
    }
  } else {
    for (;;) {
      hi = lo + kScanStep;
      if (f(hi) <= 0.0) break;
      lo = hi;
      if (lo > 2.0) throw std::logic_error("s_star: psi positive beyond s = 2");
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

double psi(const MeanState& x, double s, double beta) {
  if (s < 0.0) throw std::domain_error("psi: s must be nonnegative");
  const auto y = level_sums(x);
  return psi_from_sums(y, s, beta);
}

double s_star(const MeanState& x, double beta) {
  const auto y = level_sums(x);
  return s_star_from_sums(y, beta);
}

double s_star_boundary(double beta) {
  if (beta <= 2.0) return 0.0;
  const double y[2] = {1.0 - 1.0 / beta, 1.0 / beta};
  return s_star_from_sums(y, beta);
}

namespace detail {

MeanState flow_two_level(const MeanState& x, double t, const ModelSpec& spec) {
  MeanState out(2, x.subpops());
  for (int m = 0; m < x.subpops(); ++m) {
    const double a = x(0, m) + x(1, m);
    const double x1 = 0.5 * a - (0.5 * a - x(1, m)) * std::exp(-2.0 * spec.rho[m] * t);
    out(1, m) = x1;
    out(0, m) = a - x1;
  }
  return out;
}

namespace {

// Weights w_r = P(Poisson(lambda) = r mod K), computed outward from the mode.
std::vector<double> wrapped_poisson(double lambda, int K) {
  std::vector<double> w(static_cast<std::size_t>(K), 0.0);
  if (!(lambda > 0.0)) {
    w[0] = 1.0;
    return w;
  }
  const auto mode = static_cast<long long>(std::floor(lambda));
  const double pmf_mode =
      std::exp(-lambda + static_cast<double>(mode) * std::log(lambda) - std::lgamma(mode + 1.0));
  constexpr double kCut = 1e-18;
  double term = pmf_mode;
  for (long long j = mode; ; ++j) {
    w[static_cast<std::size_t>(j % K)] += term;
    term *= lambda / static_cast<double>(j + 1);
    if (term < kCut && static_cast<double>(j) > lambda) break;
  }
  term = pmf_mode;
  for (long long j = mode; j > 0;) {
    term *= static_cast<double>(j) / lambda;
    --j;
    w[static_cast<std::size_t>(j % K)] += term;
    if (term < kCut) break;
  }
  return w;
}

}  // namespace

MeanState flow_wrapped_poisson(const MeanState& x, double t, const ModelSpec& spec) {
  const int K = x.levels();
  MeanState out(K, x.subpops());
  for (int m = 0; m < x.subpops(); ++m) {
    const auto w = wrapped_poisson(spec.rho[m] * t, K);
    for (int k = 0; k < K; ++k) {
      double v = 0.0;
      for (int r = 0; r < K; ++r) v += w[r] * x(((k - r) % K + K) % K, m);
      out(k, m) = v;
    }
  }
  return out;
}

MeanState jump_with_size(const MeanState& x, double s, double beta) {
  const int K = x.levels();
  const int M = x.subpops();
  MeanState out(K, M);
  const double z = beta * s;
  const double decay = std::exp(-z);
  for (int m = 0; m < M; ++m) {
    const double a = x.subpop_sum(m);
    double upper = 0.0;
    for (int k = 1; k < K; ++k) {
      double v = 0.0;
      double coeff = 1.0;  // z^j / j!
      for (int j = 0; j <= k; ++j) {
        v += coeff * x(k - j, m);
        coeff *= z / (j + 1);
      }
      out(k, m) = decay * v;
      upper += out(k, m);
    }
    out(0, m) = a - upper;
  }
  return out;
}

double threshold_gap(const MeanState& x, double t, const ModelSpec& spec) {
  if (x.levels() == 2) {
    double y = 0.0;
    for (int m = 0; m < x.subpops(); ++m) {
      const double a = x(0, m) + x(1, m);
      y += 0.5 * a - (0.5 * a - x(1, m)) * std::exp(-2.0 * spec.rho[m] * t);
    }
    return y - 1.0 / spec.beta;
  }
  const auto xt = flow_wrapped_poisson(x, t, spec);
  return xt.level_sum(x.levels() - 1) - 1.0 / spec.beta;
}

}  // namespace detail

MeanState flow(const MeanState& x, double t, const ModelSpec& spec) {
  if (t < 0.0) throw std::domain_error("flow: t must be nonnegative");
  if (x.subpops() != spec.M || x.levels() != spec.K)
    throw spec_error("flow: state shape does not match spec");
  if (x.levels() == 2) return detail::flow_two_level(x, t, spec);
  return detail::flow_wrapped_poisson(x, t, spec);
}

std::optional<double> hitting_time(const MeanState& x, const ModelSpec& spec) {
  const double threshold = 1.0 / spec.beta;
  auto f = [&](double t) { return detail::threshold_gap(x, t, spec); };
  if (f(0.0) >= 0.0) return 0.0;

  if (spec.K == 2) {
    // Each x_{1,m}(t) moves monotonically toward a_m/2.
    double bound = 0.0;
    for (int m = 0; m < spec.M; ++m)
      bound += std::max(x(1, m), 0.5 * (x(0, m) + x(1, m)));
    if (bound < threshold) return std::nullopt;
  }

  const double dt = 0.1 / spec.rho_max();
  const double slowest = spec.rho_min() * (1.0 - std::cos(2.0 * std::numbers::pi / spec.K));
  const double t_max = 40.0 / slowest;
  double lo = 0.0;
  double hi = dt;
  while (f(hi) < 0.0) {
    lo = hi;
    if (lo > t_max) return std::nullopt;
    hi = lo + dt;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return hi;
}

JumpResult burst_map(const MeanState& x, const ModelSpec& spec) {
  if (x.level_sum(x.levels() - 1) < 1.0 / spec.beta - 1e-10)
    throw std::domain_error("burst_map: state lies strictly inside the flow region");
  JumpResult out;
  out.size = s_star(x, spec.beta);
  out.state = out.size > 0.0 ? detail::jump_with_size(x, out.size, spec.beta) : x;
  if (out.size > 0.0) {
    for (int m = 0; m < x.subpops(); ++m) {
      double upper = 0.0;
      for (int k = 1; k < x.levels(); ++k) upper += out.state(k, m);
      out.state(0, m) = spec.alpha[m] - upper;
    }
  }
  return out;
}

MeanState return_map(const MeanState& x, const ModelSpec& spec) {
  const auto tau = hitting_time(x, spec);
  if (!tau) throw no_burst_reachable("no burst reachable: flow stays below 1/beta");
  const auto jump = burst_map(flow(x, *tau, spec), spec);
  if (!(jump.size > 0.0))
    throw no_burst_reachable("no burst reachable: boundary contact with zero burst size");
  return jump.state;
}

double physical_duration(const MeanState& x, double u, const ModelSpec& spec) {
  if (u <= 0.0) return 0.0;
  if (x.levels() == 2) {
    double lin = 0.0;
    double sat = 0.0;
    for (int m = 0; m < x.subpops(); ++m) {
      const double a = x(0, m) + x(1, m);
      const double gap = 0.5 * a - x(1, m);
      lin += 0.5 * a;
      sat += gap * (-std::expm1(-2.0 * spec.rho[m] * u)) / (2.0 * spec.rho[m]);
    }
    return u * (1.0 - spec.beta * lin) + spec.beta * sat;
  }
  // Composite 5-point Gauss-Legendre.
  static constexpr double nodes[5] = {0.0, -0.5384693101056831, 0.5384693101056831,
                                      -0.9061798459386640, 0.9061798459386640};
  static constexpr double weights[5] = {0.5688888888888889, 0.4786286704993665,
                                        0.4786286704993665, 0.2369268850561891,
                                        0.2369268850561891};
  const int pieces = std::max(4, static_cast<int>(std::ceil(u * spec.rho_max() * 20.0)));
  const double h = u / pieces;
  double total = 0.0;
  for (int i = 0; i < pieces; ++i) {
    const double mid = (i + 0.5) * h;
    for (int q = 0; q < 5; ++q) {
      const double t = mid + 0.5 * h * nodes[q];
      const auto xt = detail::flow_wrapped_poisson(x, t, spec);
      total += weights[q] * 0.5 * h * (1.0 - spec.beta * xt.level_sum(x.levels() - 1));
    }
  }
  return total;
}

double flow_time_for(const MeanState& x, double physical, const ModelSpec& spec, double u_max) {
  if (physical <= 0.0) return 0.0;
  double lo = 0.0;
  double hi = physical;
  if (std::isfinite(u_max)) {
    // The integrand is positive only below the threshold, so search [0, u_max].
    if (physical_duration(x, u_max, spec) <= physical) return u_max;
    hi = u_max;
  } else {
    while (physical_duration(x, hi, spec) < physical) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e12) throw std::domain_error("flow_time_for: duration not reachable");
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (physical_duration(x, mid, spec) < physical ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Horizon Horizon::defaults(const ModelSpec& spec) { return Horizon{1e3 / spec.rho_min(), 200}; }

HybridTrajectory hybrid_run(const MeanState& x0, const ModelSpec& spec, Horizon horizon,
                            TimeChange time_change) {
  require_shape(spec);
  HybridTrajectory traj;
  traj.time_change = time_change;
  double t = 0.0;
  MeanState x = x0;

  auto record_burst = [&](const JumpResult& jump) {
    traj.burst_times.push_back(t);
    traj.burst_sizes.push_back(jump.size);
    traj.post_burst_states.push_back(jump.state);
  };

  if (classify(x, spec.beta) == Region::Burst) {
    const auto jump = burst_map(x, spec);
    traj.segments.push_back({0.0, x, 0.0, 0.0, x});
    if (!(jump.size > 0.0)) {
      traj.stalled = true;
      return traj;
    }
    record_burst(jump);
    x = jump.state;
  }

  while (static_cast<int>(traj.burst_times.size()) < horizon.max_bursts) {
    const auto tau = hitting_time(x, spec);
    const double remaining = horizon.max_time - t;
    if (!tau) {
      const double inf = std::numeric_limits<double>::infinity();
      traj.segments.push_back({t, x, inf, inf, std::nullopt});
      break;
    }
    const double duration =
        time_change == TimeChange::unit ? *tau : physical_duration(x, *tau, spec);
    if (duration > remaining) {
      const double u = time_change == TimeChange::unit ? remaining
                                                       : flow_time_for(x, remaining, spec, *tau);
      traj.segments.push_back({t, x, horizon.max_time, u, std::nullopt});
      break;
    }
    const MeanState pre = flow(x, *tau, spec);
    const auto jump = burst_map(pre, spec);
    traj.segments.push_back({t, x, t + duration, *tau, pre});
    t += duration;
    if (!(jump.size > 0.0)) {
      traj.stalled = true;
      break;
    }
    record_burst(jump);
    x = jump.state;
  }
  return traj;
}

MeanState HybridTrajectory::state_at(double t, const ModelSpec& spec) const {
  if (segments.empty() || t < 0.0) throw std::out_of_range("state_at: no segment covers t");
  auto it = std::upper_bound(segments.begin(), segments.end(), t,
                             [](double v, const FlowSegment& s) { return v < s.start_time; });
  if (it == segments.begin()) throw std::out_of_range("state_at: no segment covers t");
  const FlowSegment& seg = *std::prev(it);
  if (t > seg.end_time) throw std::out_of_range("state_at: t beyond the trajectory");
  if (t == seg.end_time && seg.pre_burst) {
    // Only reached for the last segment of a run cut by max_bursts or stalled.
    const auto b = std::lower_bound(burst_times.begin(), burst_times.end(), t);
    if (b != burst_times.end() && *b == t)
      return post_burst_states[static_cast<std::size_t>(b - burst_times.begin())];
    return *seg.pre_burst;
  }
  const double elapsed = t - seg.start_time;
  const double u =
      time_change == TimeChange::unit
          ? elapsed
          : flow_time_for(seg.start_state, elapsed, spec, seg.flow_length);
  return flow(seg.start_state, std::min(u, seg.flow_length), spec);
}

namespace {

void write_state_columns(std::ostream& os, int K, int M) {
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) os << ",x_" << k << '_' << m;
  os << '\n';
}

void write_values(std::ostream& os, const MeanState& x) {
  for (double v : x.data()) os << ',' << v;
  os << '\n';
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const HybridTrajectory& traj,
                          const nlohmann::json& meta) {
  os << "# " << meta.dump() << '\n';
  os << "segment_index,t_start,t_end,tau_flag,s_star";
  const auto& first = traj.segments.empty() ? MeanState() : traj.segments.front().start_state;
  write_state_columns(os, first.levels(), first.subpops());
  os << std::setprecision(17);
  std::size_t burst = 0;
  for (std::size_t i = 0; i < traj.segments.size(); ++i) {
    const auto& seg = traj.segments[i];
    os << i << ',' << seg.start_time << ',' << seg.end_time << ",0,0";
    write_values(os, seg.start_state);
    if (seg.pre_burst) {
      const double size = burst < traj.burst_sizes.size() ? traj.burst_sizes[burst] : 0.0;
      os << i << ',' << seg.start_time << ',' << seg.end_time << ",1," << size;
      write_values(os, *seg.pre_burst);
      ++burst;
    }
  }
}

void write_samples_csv(std::ostream& os, const HybridTrajectory& traj, const ModelSpec& spec,
                       double dt, double t_end, const nlohmann::json& meta) {
  os << "# " << meta.dump() << '\n';
  os << 't';
  write_state_columns(os, spec.K, spec.M);
  os << std::setprecision(17);
  const auto steps = static_cast<long long>(std::floor(t_end / dt + 1e-9));
  for (long long i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    MeanState x;
    try {
      x = traj.state_at(t, spec);
    } catch (const std::out_of_range&) {
      break;
    }
    os << t;
    write_values(os, x);
  }
}

}  // namespace burstnet
