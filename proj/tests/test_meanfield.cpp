#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "burstnet/meanfield.hpp"
#include "burstnet/random.hpp"
#include "oracles.hpp"

using namespace burstnet;

namespace {

ModelSpec make(int K, std::vector<double> alpha, std::vector<double> rho, double beta) {
  ModelSpec s;
  s.K = K;
  s.M = static_cast<int>(alpha.size());
  s.alpha = std::move(alpha);
  s.rho = std::move(rho);
  s.beta = beta;
  return s;
}

std::vector<double> level_sums(const MeanState& x) {
  std::vector<double> y(static_cast<std::size_t>(x.levels()));
  for (int k = 0; k < x.levels(); ++k) y[k] = x.level_sum(k);
  return y;
}

// Two-level state with level-1 sum exactly 1/beta.
MeanState boundary2(const std::vector<double>& alpha, const std::vector<double>& share,
                    double beta) {
  const std::size_t M = alpha.size();
  MeanState x(2, static_cast<int>(M));
  for (std::size_t m = 0; m < M; ++m) {
    x(1, m) = share[m] / beta;
    x(0, m) = alpha[m] - x(1, m);
  }
  return x;
}

MeanState oracle_flow(const MeanState& x, double t, const ModelSpec& spec) {
  MeanState out(x.levels(), x.subpops());
  for (int m = 0; m < x.subpops(); ++m) {
    Eigen::VectorXd v(x.levels());
    for (int k = 0; k < x.levels(); ++k) v(k) = x(k, m);
    const Eigen::VectorXd w = oracle::expm(oracle::cyclic_generator(x.levels(), spec.rho[m]) * t) * v;
    for (int k = 0; k < x.levels(); ++k) out(k, m) = w(k);
  }
  return out;
}

}  // namespace

TEST_CASE("poisson_tail against direct summation") {
  for (double lambda : {0.0, 1e-6, 0.3, 1.0, 2.5, 7.0, 30.0}) {
    double cdf = 0.0;
    double term = std::exp(-lambda);
    for (int i = 1; i <= 6; ++i) {
      cdf += term;
      term *= lambda / i;
      CHECK(poisson_tail(lambda, i) == doctest::Approx(1.0 - cdf).epsilon(1e-10));
    }
  }
}

TEST_CASE("psi vanishes at s = 0") {
  RngHandle rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto spec = sample_spec(2 + i % 4, 1 + i % 5, 3.0, rng);
    CHECK(psi(sample_state(spec, rng), 0.0, 3.0) == 0.0);
  }
}

TEST_CASE("psi at s = 1 on the two-level boundary") {
  for (double beta : {2.5, 3.0, 7.0}) {
    const auto x = boundary2({0.4, 0.6}, {0.3, 0.7}, beta);
    CHECK(psi(x, 1.0, beta) == doctest::Approx(-beta * std::exp(-beta)).epsilon(1e-12));
  }
}

TEST_CASE("psi agrees with the queue-flow form") {
  RngHandle rng(33);
  for (int K : {2, 3, 4, 5}) {
    for (int i = 0; i < 10; ++i) {
      const double beta = rng.uniform(1.0, 8.0);
      const auto spec = sample_spec(K, 3, beta, rng);
      const auto x = sample_state(spec, rng);
      const auto y = level_sums(x);
      for (double s : {0.01, 0.2, 0.5, 0.9, 1.3}) {
        INFO("K = " << K << " beta = " << beta << " s = " << s);
        CHECK(std::abs(psi(x, s, beta) - oracle::psi_queue(y, beta, s)) < 1e-12);
      }
    }
  }
  CHECK_THROWS(psi(equilibrium(make(2, {0.5, 0.5}, {1, 1}, 3.0)), -0.1, 3.0));
}

TEST_CASE("s_star on the two-level boundary") {
  for (double beta : {1.2, 1.5, 1.9, 2.0}) CHECK(s_star_boundary(beta) == 0.0);
  // Root of 1 - s - (1.5 s + 1) e^{-2.5 s} frozen from a 40-digit bisection.
  CHECK(std::abs(s_star_boundary(2.5) - 0.49197328015278301) < 1e-12);
  CHECK(std::abs(s_star_boundary(3.0) - 0.71637526663568751) < 1e-12);
  CHECK(std::abs(s_star_boundary(50.0) - 1.0) < 0.05);
  for (double beta : {2.05, 2.1, 4.0, 10.0})
    CHECK(std::abs(s_star_boundary(beta) - oracle::s_star2(beta)) < 1e-12);
  // The boundary value does not depend on how the mass is split.
  const auto a = boundary2({0.2, 0.8}, {0.9, 0.1}, 3.0);
  const auto b = boundary2({0.5, 0.5}, {0.5, 0.5}, 3.0);
  CHECK(std::abs(s_star(a, 3.0) - s_star(b, 3.0)) < 1e-13);
}

TEST_CASE("s_star is a root with psi positive before it") {
  RngHandle rng(8);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const int K = 2 + i % 3;
    const double beta = rng.uniform(2.2, 9.0);
    const auto spec = sample_spec(K, 4, beta, rng);
    const auto x = sample_state(spec, rng);
    if (classify(x, beta) != Region::Burst) {
      CHECK(s_star(x, beta) == 0.0);
      continue;
    }
    const double s = s_star(x, beta);
    if (s == 0.0) continue;
    ++checked;
    CHECK(std::abs(psi(x, s, beta)) < 1e-9);
    for (int j = 1; j < 20; ++j) CHECK(psi(x, s * j / 20.0, beta) > 0.0);
  }
  CHECK(checked > 50);
}

TEST_CASE("flow keeps the equilibrium fixed") {
  const auto spec = make(3, {0.2, 0.3, 0.5}, {0.5, 1.0, 2.0}, 3.0);
  const auto eq = equilibrium(spec);
  for (double t : {0.1, 1.0, 10.0}) CHECK(distance(flow(eq, t, spec), eq) < 1e-12);
}

TEST_CASE("two-level flow relaxes to half occupancy") {
  const auto spec = make(2, {1.0}, {1.0}, 3.0);
  MeanState x(2, 1);
  x(0, 0) = 1.0;
  const auto far = flow(x, 50.0, spec);
  CHECK(far(1, 0) == doctest::Approx(0.5).epsilon(1e-14));
  const auto mid = flow(x, 0.3, spec);
  CHECK(mid(1, 0) == doctest::Approx(0.5 - 0.5 * std::exp(-0.6)).epsilon(1e-14));
}

TEST_CASE("flow agrees with the dense matrix exponential") {
  RngHandle rng(12);
  for (int K : {2, 3, 4, 6}) {
    for (int i = 0; i < 5; ++i) {
      const auto spec = sample_spec(K, 3, 3.0, rng, 0.2, 5.0);
      const auto x = sample_state(spec, rng);
      for (double t : {0.0, 0.05, 0.7, 3.0, 20.0}) {
        INFO("K = " << K << " t = " << t);
        CHECK(distance(flow(x, t, spec), oracle_flow(x, t, spec)) < 1e-10);
      }
      CHECK(distance(flow(flow(x, 0.4, spec), 0.9, spec), flow(x, 1.3, spec)) < 1e-12);
    }
  }
}

TEST_CASE("hitting time for a single population from rest") {
  const auto spec = make(2, {1.0}, {1.0}, 4.0);
  MeanState x(2, 1);
  x(0, 0) = 1.0;
  const auto tau = hitting_time(x, spec);
  REQUIRE(tau);
  CHECK(*tau == doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-13));
  CHECK(classify(flow(x, *tau, spec), 4.0) == Region::Burst);
}

TEST_CASE("hitting time is None below beta = 2") {
  RngHandle rng(2);
  for (int i = 0; i < 50; ++i) {
    auto spec = sample_spec(2, 1 + i % 4, 1.5, rng);
    std::fill(spec.rho.begin(), spec.rho.end(), spec.rho[0]);
    const auto x = sample_state(spec, rng);
    if (classify(x, 1.5) == Region::Burst) continue;
    CHECK_FALSE(hitting_time(x, spec).has_value());
  }
}

TEST_CASE("two-level hitting time bound") {
  // sum_m x_{1,m}(t) >= (1 - e^{-2 rho_min t}) / 2 from any start, so the
  // threshold is reached by log(beta / (beta - 2)) / (2 rho_min).
  RngHandle rng(21);
  for (int i = 0; i < 300; ++i) {
    const double beta = rng.uniform(2.05, 10.0);
    const auto spec = sample_spec(2, 1 + i % 8, beta, rng);
    MeanState x(2, spec.M);
    for (int m = 0; m < spec.M; ++m) {
      x(1, m) = 0.5 * spec.alpha[m] * rng.uniform();
      x(0, m) = spec.alpha[m] - x(1, m);
    }
    const auto tau = hitting_time(x, spec);
    REQUIRE(tau);
    CHECK(*tau <= std::log(beta / (beta - 2.0)) / (2.0 * spec.rho_min()) + 1e-12);
  }
  // From rest the threshold takes longer than log(beta / (beta - 1)) / rho.
  const auto single = make(2, {1.0}, {1.0}, 3.0);
  MeanState rest(2, 1);
  rest(0, 0) = 1.0;
  CHECK(*hitting_time(rest, single) == doctest::Approx(0.5 * std::log(3.0)).epsilon(1e-12));
  CHECK(*hitting_time(rest, single) > std::log(1.5));
}

TEST_CASE("hitting time agrees with the scalar oracle") {
  RngHandle rng(5);
  for (int i = 0; i < 50; ++i) {
    const double beta = rng.uniform(2.1, 6.0);
    const auto spec = sample_spec(2, 2 + i % 5, beta, rng);
    auto x = sample_state(spec, rng);
    if (classify(x, beta) == Region::Burst) continue;
    std::vector<double> x1(spec.M);
    for (int m = 0; m < spec.M; ++m) x1[m] = x(1, m);
    double tau = 0.0;
    oracle::stopped_flow2(x1, spec.alpha, spec.rho, beta, &tau);
    CHECK(*hitting_time(x, spec) == doctest::Approx(tau).epsilon(1e-12));
  }
}

TEST_CASE("jump is the identity below beta = 2") {
  for (double beta : {1.5, 2.0}) {
    const auto spec = make(2, {0.4, 0.6}, {1.0, 2.0}, beta);
    const auto x = boundary2(spec.alpha, {0.5, 0.5}, beta);
    const auto j = burst_map(x, spec);
    CHECK(j.size == 0.0);
    CHECK(distance(j.state, x) < 1e-15);
  }
}

TEST_CASE("single-population jump formula") {
  const auto spec = make(2, {1.0}, {1.0}, 2.5);
  MeanState x(2, 1);
  x(0, 0) = 0.6;
  x(1, 0) = 0.4;
  const auto j = burst_map(x, spec);
  const double s = oracle::s_star2(2.5);
  CHECK(j.size == doctest::Approx(s).epsilon(1e-12));
  CHECK(j.state(1, 0) ==
        doctest::Approx(std::exp(-2.5 * s) * (2.5 * s * 0.6 + 0.4)).epsilon(1e-12));
  CHECK(j.state(0, 0) + j.state(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("jump agrees with the queue-flow matrix exponential") {
  RngHandle rng(17);
  int checked = 0;
  for (int i = 0; i < 200 && checked < 40; ++i) {
    const int K = 2 + i % 3;
    const double beta = rng.uniform(2.2, 8.0);
    const auto spec = sample_spec(K, 3, beta, rng);
    const auto x = sample_state(spec, rng);
    if (classify(x, beta) != Region::Burst) continue;
    const auto j = burst_map(x, spec);
    if (j.size == 0.0) continue;
    ++checked;
    for (int m = 0; m < spec.M; ++m) {
      std::vector<double> col(K);
      for (int k = 0; k < K; ++k) col[k] = x(k, m);
      const auto xi = oracle::queue_flow(col, beta, j.size);
      for (int k = 1; k < K; ++k) CHECK(std::abs(j.state(k, m) - xi(k)) < 1e-12);
      CHECK(j.state.subpop_sum(m) == doctest::Approx(spec.alpha[m]).epsilon(1e-12));
    }
    CHECK(j.state.level_sum(K - 1) < 1.0 / beta);
  }
  CHECK(checked == 40);
}

TEST_CASE("burst_map refuses states below the threshold") {
  const auto spec = make(2, {0.5, 0.5}, {1, 1}, 3.0);
  MeanState x(2, 2);
  x(0, 0) = 0.5;
  x(0, 1) = 0.5;
  CHECK_THROWS_AS(burst_map(x, spec), std::domain_error);
}

TEST_CASE("return map without reachable bursts") {
  const auto spec = make(2, {0.2, 0.3, 0.5}, {1.0, 1.0, 1.0}, 1.5);
  CHECK_THROWS_AS(return_map(equilibrium(spec), spec), no_burst_reachable);
}

TEST_CASE("single-population return map closed form") {
  const double beta = 3.0;
  const auto spec = make(2, {1.0}, {2.0}, beta);
  MeanState x(2, 1);
  x(0, 0) = 0.9;
  x(1, 0) = 0.1;
  const auto h = return_map(x, spec);
  const double s = oracle::s_star2(beta);
  const double expect = std::exp(-beta * s) * (beta * s * (1.0 - 1.0 / beta) + 1.0 / beta);
  CHECK(h(1, 0) == doctest::Approx(expect).epsilon(1e-12));
  // Every later iterate starts from the same boundary point.
  CHECK(distance(return_map(h, spec), h) < 1e-12);
}

TEST_CASE("return map fixed point for three populations") {
  const auto spec = make(2, {0.2, 0.3, 0.5}, {0.7, 1.0, 1.6}, 2.5);
  MeanState x = equilibrium(spec);
  x = burst_map(x, spec).state;
  for (int i = 0; i < 200; ++i) x = return_map(x, spec);
  CHECK(distance(return_map(x, spec), x) < 1e-10);
}

TEST_CASE("hybrid run below beta = 2 never bursts") {
  const auto spec = make(2, {0.2, 0.3, 0.5}, {0.7, 1.0, 1.6}, 1.5);
  MeanState x0(2, 3);
  for (int m = 0; m < 3; ++m) x0(0, m) = spec.alpha[m];
  const auto traj = hybrid_run(x0, spec, Horizon::defaults(spec));
  CHECK(traj.burst_times.empty());
  REQUIRE(traj.segments.size() == 1);
  CHECK(std::isinf(traj.segments[0].end_time));
  CHECK(distance(traj.state_at(100.0, spec), equilibrium(spec)) < 1e-12);
}

TEST_CASE("hybrid run with three populations settles on a cycle") {
  RngHandle rng(31);
  const auto spec = sample_spec(2, 3, 2.5, rng);
  const auto x0 = sample_state(spec, rng);
  Horizon h;
  h.max_bursts = 60;
  const auto traj = hybrid_run(x0, spec, h);
  REQUIRE(traj.burst_times.size() == 60);
  const auto& post = traj.post_burst_states;
  CHECK(distance(post[59], post[58]) < 1e-10);
  for (std::size_t j = 1; j < traj.burst_times.size(); ++j)
    CHECK(traj.burst_times[j] > traj.burst_times[j - 1]);
  // state_at is right-continuous at bursts and follows the flow in between.
  CHECK(distance(traj.state_at(traj.burst_times[3], spec), post[3]) < 1e-15);
  const double mid = 0.5 * (traj.burst_times[3] + traj.burst_times[4]);
  CHECK(distance(traj.state_at(mid, spec), flow(post[3], mid - traj.burst_times[3], spec)) <
        1e-12);
  CHECK_THROWS_AS(traj.state_at(traj.burst_times.back() + 1.0, spec), std::out_of_range);
}

TEST_CASE("single-population bursts all have size s*") {
  const auto spec = make(2, {1.0}, {1.0}, 3.0);
  MeanState x0(2, 1);
  x0(0, 0) = 1.0;
  Horizon h;
  h.max_bursts = 10;
  const auto traj = hybrid_run(x0, spec, h);
  REQUIRE(traj.burst_sizes.size() == 10);
  for (double s : traj.burst_sizes) CHECK(s == doctest::Approx(s_star_boundary(3.0)).epsilon(1e-12));
}

TEST_CASE("a start inside the burst region jumps at t = 0") {
  const auto spec = make(2, {0.5, 0.5}, {1.0, 2.0}, 3.0);
  const auto traj = hybrid_run(equilibrium(spec), spec, Horizon{10.0, 3});
  REQUIRE_FALSE(traj.burst_times.empty());
  CHECK(traj.burst_times[0] == 0.0);
  CHECK(traj.burst_sizes[0] > 0.0);
}

TEST_CASE("mean-burst-size time change") {
  const auto spec = make(2, {0.4, 0.6}, {1.0, 2.5}, 3.0);
  MeanState x(2, 2);
  x(1, 0) = 0.05;
  x(0, 0) = 0.35;
  x(1, 1) = 0.1;
  x(0, 1) = 0.5;
  const double tau = *hitting_time(x, spec);
  // Simpson rule on 1 - beta * y_1 along the closed-form flow.
  const int n = 20000;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double u = tau * i / n;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    integral += w * (1.0 - 3.0 * flow(x, u, spec).level_sum(1));
  }
  integral *= tau / n / 3.0;
  CHECK(physical_duration(x, tau, spec) == doctest::Approx(integral).epsilon(1e-10));
  CHECK(flow_time_for(x, 0.5 * integral, spec, tau) ==
        doctest::Approx(flow_time_for(x, 0.5 * integral, spec)).epsilon(1e-10));
  const double u = flow_time_for(x, 0.3 * integral, spec, tau);
  CHECK(physical_duration(x, u, spec) == doctest::Approx(0.3 * integral).epsilon(1e-12));

  // Orbits and burst states do not depend on the parametrization.
  Horizon h;
  h.max_bursts = 5;
  const auto a = hybrid_run(x, spec, h, TimeChange::unit);
  const auto b = hybrid_run(x, spec, h, TimeChange::mean_burst_size);
  REQUIRE(a.burst_times.size() == b.burst_times.size());
  for (std::size_t j = 0; j < a.burst_times.size(); ++j) {
    CHECK(distance(a.post_burst_states[j], b.post_burst_states[j]) < 1e-14);
    CHECK(b.burst_times[j] < a.burst_times[j]);
  }
  const double t1 = b.burst_times[1];
  const double t2 = b.burst_times[2];
  const auto mid = b.state_at(0.5 * (t1 + t2), spec);
  const double u_mid = flow_time_for(b.post_burst_states[1], 0.5 * (t2 - t1), spec);
  CHECK(distance(mid, flow(b.post_burst_states[1], u_mid, spec)) < 1e-12);
}

TEST_CASE("physical duration for more levels") {
  const auto spec = make(3, {0.5, 0.5}, {1.0, 1.5}, 4.0);
  MeanState x(3, 2);
  x(0, 0) = 0.5;
  x(0, 1) = 0.3;
  x(1, 1) = 0.2;
  const double u = 0.8;
  const int n = 4000;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    integral += w * (1.0 - 4.0 * oracle_flow(x, u * i / n, spec).level_sum(2));
  }
  integral *= u / n / 3.0;
  CHECK(physical_duration(x, u, spec) == doctest::Approx(integral).epsilon(1e-9));
}

TEST_CASE("trajectory CSV layout") {
  const auto spec = make(2, {0.5, 0.5}, {1.0, 2.0}, 3.0);
  MeanState x0(2, 2);
  x0(0, 0) = 0.5;
  x0(0, 1) = 0.5;
  const auto traj = hybrid_run(x0, spec, Horizon{100.0, 3});
  std::ostringstream os;
  write_trajectory_csv(os, traj, {{"beta", 3.0}});
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# {", 0) == 0);
  std::getline(in, line);
  CHECK(line == "segment_index,t_start,t_end,tau_flag,s_star,x_0_0,x_0_1,x_1_0,x_1_1");
  int rows = 0;
  int pre = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.find(",1,") != std::string::npos) ++pre;
  }
  CHECK(rows == static_cast<int>(traj.segments.size()) + 3);
  CHECK(pre >= 3);
}
