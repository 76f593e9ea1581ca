#include "burstnet/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "burstnet/random.hpp"
#include "burstnet/stochastic.hpp"

namespace burstnet::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

json parse_config(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t upto = std::min(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream msg;
    msg << origin << ':' << line << ':' << col << ": " << e.what();
    throw config_error(msg.str());
  }
}

json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t threads =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

namespace {

MeanState resting_state(const ModelSpec& spec) {
  MeanState x(spec.K, spec.M);
  for (int m = 0; m < spec.M; ++m) x(0, m) = spec.alpha[m];
  return x;
}

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << std::setprecision(17);
  return os;
}

void state_header(std::ostream& os, int K, int M) {
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) os << ",x_" << k << '_' << m;
}

void state_row(std::ostream& os, const MeanState& x) {
  for (double v : x.data()) os << ',' << v;
}

}  // namespace

// ---------------------------------------------------------------------------

CompareSetup prepare_compare(const ModelSpec& spec, std::int64_t N, const CompareOptions& opts) {
  require_valid(spec);
  if (!(spec.beta > 2.0)) throw config_error("compare requires beta > 2");
  CompareSetup su;
  const auto sizes = subpopulation_sizes(spec.alpha, N);
  su.spec_N = spec;
  for (int m = 0; m < spec.M; ++m)
    su.spec_N.alpha[m] = static_cast<double>(sizes[m]) / static_cast<double>(N);
  const MeanState start = opts.x0 ? *opts.x0 : resting_state(spec);
  if (!on_simplex_slice(start, spec.alpha, 1e-9))
    throw config_error("x0 does not lie on the simplex slice of alpha");
  su.X0 = counts_from_fractions(start, spec.alpha, sizes);
  su.x0 = su.X0.fractions();

  su.T = opts.T;
  if (std::isnan(su.T)) {
    const auto probe = hybrid_run(su.x0, su.spec_N,
                                  Horizon{std::numeric_limits<double>::infinity(), 4},
                                  opts.time_change);
    if (probe.burst_times.size() < 4)
      throw config_error("fewer than four deterministic bursts; pass T explicitly");
    su.T = 0.5 * (probe.burst_times[2] + probe.burst_times[3]);
  }
  if (!(su.T > 0.0)) throw config_error("T must be positive");
  su.det = hybrid_run(su.x0, su.spec_N,
                      Horizon{2.0 * su.T + 10.0 / spec.rho_min(), std::numeric_limits<int>::max()},
                      opts.time_change);
  if (su.det.stalled) throw config_error("mean-field run stalled on the burst boundary");

  su.b_min = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < su.det.burst_times.size(); ++j)
    if (su.det.burst_times[j] < su.T) su.b_min = std::min(su.b_min, su.det.burst_sizes[j]);
  if (!std::isfinite(su.b_min)) throw config_error("no deterministic burst before T");

  su.epsilon = std::isnan(opts.epsilon) ? 0.05 / spec.rho_min() : opts.epsilon;
  su.gamma = std::isnan(opts.gamma) ? 0.5 * su.b_min : opts.gamma;
  if (!(su.epsilon > 0.0)) throw config_error("epsilon must be positive");
  if (!(su.gamma > 0.0)) throw config_error("gamma must be positive");
  if (su.gamma >= su.b_min) {
    std::ostringstream msg;
    msg << "gamma exceeds b_min: gamma = " << su.gamma << ", b_min = " << su.b_min;
    throw config_error(msg.str());
  }
  return su;
}

ComparisonRun compare_once(const CompareSetup& su, std::int64_t N, int seed_index,
                           std::uint64_t seed, int grid_points) {
  ComparisonRun out;
  out.N = N;
  out.seed_index = seed_index;
  out.seed = seed;
  for (double t : su.det.burst_times)
    if (t < su.T) out.det_times.push_back(t);
  out.n_det = static_cast<int>(out.det_times.size());

  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(grid_points) + out.det_times.size());
  for (int i = 0; i < grid_points; ++i)
    grid.push_back(grid_points == 1 ? 0.0 : su.T * i / (grid_points - 1));
  grid.insert(grid.end(), out.det_times.begin(), out.det_times.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  StochasticSpec ss;
  ss.base = su.spec_N;
  ss.N = N;
  ss.p = su.spec_N.beta / static_cast<double>(N);
  ss.seed = seed;
  RngHandle rng(seed);
  std::vector<CountState> sampled(grid.size());
  std::size_t gi = 0;
  CountState last = su.X0;
  const double big = su.gamma * static_cast<double>(N);
  simulate(ss, su.X0, RunLimits{su.T, std::numeric_limits<std::uint64_t>::max()}, rng,
           [&](double t, std::int64_t size, const CountState& s) {
             while (gi < grid.size() && grid[gi] < t) sampled[gi++] = last;
             last = s;
             if (size > 0 && static_cast<double>(size) >= big) {
               out.stoch_times.push_back(t);
               out.big_burst_sizes.push_back(size);
             }
           });
  while (gi < grid.size()) sampled[gi++] = last;

  out.n_stoch = static_cast<int>(out.stoch_times.size());
  out.count_mismatch = out.n_stoch != out.n_det;
  const int pairs = std::min(out.n_stoch, out.n_det);
  for (int j = 0; j < pairs; ++j)
    out.burst_time_errors.push_back(std::abs(out.stoch_times[j] - out.det_times[j]));
  if (pairs > 0)
    out.max_burst_time_error =
        *std::max_element(out.burst_time_errors.begin(), out.burst_time_errors.end());
  if (out.count_mismatch) return out;

  double sup = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    bool excised = false;
    for (double Tj : out.stoch_times)
      if (std::abs(t - Tj) < su.epsilon) excised = true;
    if (excised) continue;
    // Shift by the last big burst before t.
    const auto j = std::lower_bound(out.stoch_times.begin(), out.stoch_times.end(), t) -
                   out.stoch_times.begin();
    const double phi =
        j == 0 ? t : t - (out.stoch_times[j - 1] - out.det_times[static_cast<std::size_t>(j - 1)]);
    sup = std::max(sup, distance(sampled[i].fractions(), su.det.state_at(phi, su.spec_N)));
  }
  out.sup_distance = sup;
  return out;
}

std::vector<ComparisonReport> compare(const ModelSpec& spec, const CompareOptions& opts) {
  if (opts.seeds < 1) throw config_error("seeds must be at least 1");
  std::vector<ComparisonReport> reports;
  for (std::int64_t N : opts.n_list) {
    if (N < spec.M) throw config_error("every N must be at least M");
    const CompareSetup su = prepare_compare(spec, N, opts);
    ComparisonReport rep;
    rep.N = N;
    rep.T = su.T;
    rep.epsilon = su.epsilon;
    rep.gamma = su.gamma;
    rep.b_min = su.b_min;
    rep.runs.resize(static_cast<std::size_t>(opts.seeds));
    parallel_for(rep.runs.size(), opts.workers, [&](std::size_t i) {
      const auto seed = RngHandle::derive(opts.seed, {static_cast<std::uint64_t>(N), i}).seed();
      rep.runs[i] = compare_once(su, N, static_cast<int>(i), seed, opts.grid_points);
    });

    std::vector<double> errs;
    std::vector<double> sups;
    std::vector<double> fracs;
    // Burst-time errors use the truncated pairing of every run; the sup
    // distance only runs whose burst counts agree.
    for (const auto& r : rep.runs) {
      if (!r.burst_time_errors.empty()) errs.push_back(r.max_burst_time_error);
      for (auto s : r.big_burst_sizes) fracs.push_back(static_cast<double>(s) / N);
      if (r.count_mismatch)
        ++rep.mismatched;
      else
        sups.push_back(r.sup_distance);
    }
    rep.median_burst_time_error = median(errs);
    rep.median_sup_distance = median(sups);
    rep.n_big_bursts = static_cast<int>(fracs.size());
    if (!fracs.empty()) {
      double mean = 0.0;
      for (double f : fracs) mean += f;
      mean /= static_cast<double>(fracs.size());
      double var = 0.0;
      for (double f : fracs) var += (f - mean) * (f - mean);
      rep.mean_big_burst_fraction = mean;
      rep.stderr_big_burst_fraction =
          fracs.size() > 1
              ? std::sqrt(var / static_cast<double>(fracs.size() - 1) / static_cast<double>(fracs.size()))
              : std::numeric_limits<double>::quiet_NaN();
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

// ---------------------------------------------------------------------------

std::vector<double> beta_grid(double lo, double hi, int steps) {
  if (steps < 1) throw config_error("beta-steps must be at least 1");
  if (steps == 1) return {lo};
  std::vector<double> g(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) g[i] = lo + (hi - lo) * i / (steps - 1);
  return g;
}

ModelSpec phase_spec(int M, double beta, std::uint64_t seed) {
  auto rng = RngHandle::derive(seed, {static_cast<std::uint64_t>(M)});
  return sample_spec(2, M, beta, rng);
}

std::vector<PhaseDiagramRow> phase_diagram(const PhaseOptions& opts) {
  const auto betas = beta_grid(opts.beta_min, opts.beta_max, opts.beta_steps);
  for (double b : betas)
    if (!(b > 2.0)) throw config_error("phase diagram requires beta > 2");
  for (int M : opts.m_list)
    if (M < 2) throw config_error("phase diagram requires M >= 2");
  if (opts.n_ic < 0) throw config_error("n-ic must be non-negative");
  std::vector<PhaseDiagramRow> rows(opts.m_list.size() * betas.size());
  parallel_for(rows.size(), opts.workers, [&](std::size_t cell) {
    const int M = opts.m_list[cell / betas.size()];
    const double beta = betas[cell % betas.size()];
    const ModelSpec spec = phase_spec(M, beta, opts.seed);
    PhaseDiagramRow row;
    row.beta = beta;
    row.M = M;
    row.n_initial_conditions = opts.n_ic;
    int mono = 0;
    int nonmono = 0;
    int nonconv = 0;
    long total_iter = 0;
    for (int ic = 0; ic < opts.n_ic; ++ic) {
      auto rng = RngHandle::derive(opts.seed, {static_cast<std::uint64_t>(M),
                                               static_cast<std::uint64_t>(ic), 1});
      const MeanState x0 = sample_state(spec, rng);
      try {
        const auto r = find_limit_cycle(spec, x0, opts.tol, opts.max_iter);
        total_iter += r.iterations;
        row.max_iterations = std::max(row.max_iterations, r.iterations);
        switch (r.cls) {
          case ConvergenceClass::MonotoneConvergent: ++mono; break;
          case ConvergenceClass::NonMonotoneConvergent: ++nonmono; break;
          case ConvergenceClass::NonConvergent: ++nonconv; break;
        }
      } catch (const no_burst_reachable&) {
        ++nonconv;
      }
    }
    if (opts.n_ic > 0) {
      const double n = opts.n_ic;
      row.fraction_monotone = mono / n;
      row.fraction_nonmonotone = nonmono / n;
      row.fraction_nonconvergent = nonconv / n;
      row.mean_iterations = static_cast<double>(total_iter) / n;
    }
    rows[cell] = row;
  });
  if (opts.n_ic == 0) rows.clear();
  return rows;
}

// ---------------------------------------------------------------------------

StretchRow stretch_trial(int M, int trial, std::uint64_t seed) {
  auto rng = RngHandle::derive(
      seed, {static_cast<std::uint64_t>(M), static_cast<std::uint64_t>(trial), 2});
  const double beta = 10.0 - rng.uniform(0.0, 8.0);
  const ModelSpec spec = sample_spec(2, M, beta, rng);
  MeanState x0(2, M);
  do {
    for (int m = 0; m < M; ++m) {
      x0(1, m) = 0.5 * spec.alpha[m] * rng.uniform();
      x0(0, m) = spec.alpha[m] - x0(1, m);
    }
  } while (classify(x0, beta) == Region::Burst);
  const auto rep = stopped_flow_jacobian(x0, spec);
  StretchRow row;
  row.trial = trial;
  row.M = M;
  row.beta = beta;
  row.tau = rep.tau;
  row.restricted_norm = rep.restricted_norm;
  row.restricted_norm_power = restricted_spectral_norm_power(rep.MM);
  row.bound = 1.0 + std::sqrt(static_cast<double>(M)) / 2.0;
  row.g_modulus = rep.g_modulus;
  row.product = rep.product;
  return row;
}

std::vector<StretchRow> stability_sweep(const SweepOptions& opts) {
  if (opts.trials < 0) throw config_error("trials must be non-negative");
  for (int M : opts.m_list)
    if (M < 2) throw config_error("stability sweep requires M >= 2");
  const std::size_t per = static_cast<std::size_t>(opts.trials);
  std::vector<StretchRow> rows(opts.m_list.size() * per);
  parallel_for(rows.size(), opts.workers, [&](std::size_t i) {
    rows[i] = stretch_trial(opts.m_list[i / per], static_cast<int>(i % per), opts.seed);
  });
  return rows;
}

std::vector<std::string> check_stretch_bounds(const std::vector<StretchRow>& rows) {
  std::vector<std::string> failures;
  for (const auto& r : rows) {
    std::ostringstream msg;
    msg << std::setprecision(17);
    if (!(r.restricted_norm < r.bound))
      msg << "M = " << r.M << " trial " << r.trial << ": restricted_norm " << r.restricted_norm
          << " >= " << r.bound;
    else if (r.M == 2 && !(r.restricted_norm < 1.0))
      msg << "M = 2 trial " << r.trial << ": restricted_norm " << r.restricted_norm << " >= 1";
    else
      continue;
    failures.push_back(msg.str());
  }
  return failures;
}

// ---------------------------------------------------------------------------

void write_compare(const fs::path& dir, const std::vector<ComparisonReport>& reports,
                   const json& meta) {
  {
    auto os = open_out(dir / "compare_summary.csv");
    os << "# " << meta.dump() << '\n';
    os << "N,T,epsilon,gamma,b_min,runs,mismatched,median_burst_time_error,median_sup_distance,"
          "n_big_bursts,mean_big_burst_fraction,stderr_big_burst_fraction\n";
    for (const auto& r : reports)
      os << r.N << ',' << r.T << ',' << r.epsilon << ',' << r.gamma << ',' << r.b_min << ','
         << r.runs.size() << ',' << r.mismatched << ',' << r.median_burst_time_error << ','
         << r.median_sup_distance << ',' << r.n_big_bursts << ',' << r.mean_big_burst_fraction
         << ',' << r.stderr_big_burst_fraction << '\n';
  }
  {
    auto os = open_out(dir / "compare_runs.csv");
    os << "# " << meta.dump() << '\n';
    os << "N,seed_index,seed,n_det,n_stoch,count_mismatch,max_burst_time_error,sup_distance\n";
    for (const auto& rep : reports)
      for (const auto& r : rep.runs)
        os << r.N << ',' << r.seed_index << ',' << r.seed << ',' << r.n_det << ',' << r.n_stoch
           << ',' << (r.count_mismatch ? 1 : 0) << ',' << r.max_burst_time_error << ','
           << r.sup_distance << '\n';
  }
  {
    auto os = open_out(dir / "compare_bursts.csv");
    os << "# " << meta.dump() << '\n';
    os << "N,seed_index,j,stoch_time,det_time,burst_size,burst_fraction\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& rep : reports)
      for (const auto& r : rep.runs)
        for (int j = 0; j < r.n_stoch; ++j)
          os << r.N << ',' << r.seed_index << ',' << j + 1 << ',' << r.stoch_times[j] << ','
             << (j < r.n_det ? r.det_times[j] : nan) << ',' << r.big_burst_sizes[j] << ','
             << static_cast<double>(r.big_burst_sizes[j]) / r.N << '\n';
  }
}

void write_phase_diagram(const fs::path& file, const std::vector<PhaseDiagramRow>& rows,
                         const json& meta) {
  auto os = open_out(file);
  os << "# " << meta.dump() << '\n';
  os << "beta,M,n_initial_conditions,fraction_monotone,fraction_nonmonotone,"
        "fraction_nonconvergent,mean_iterations,max_iterations\n";
  for (const auto& r : rows)
    os << r.beta << ',' << r.M << ',' << r.n_initial_conditions << ',' << r.fraction_monotone
       << ',' << r.fraction_nonmonotone << ',' << r.fraction_nonconvergent << ','
       << r.mean_iterations << ',' << r.max_iterations << '\n';
}

void write_stability_sweep(const fs::path& file, const std::vector<StretchRow>& rows,
                           const json& meta) {
  auto os = open_out(file);
  os << "# " << meta.dump() << '\n';
  os << "trial,M,beta,tau,restricted_norm,restricted_norm_power,bound,g_modulus,product\n";
  for (const auto& r : rows)
    os << r.trial << ',' << r.M << ',' << r.beta << ',' << r.tau << ',' << r.restricted_norm
       << ',' << r.restricted_norm_power << ',' << r.bound << ',' << r.g_modulus << ','
       << r.product << '\n';
}

void write_s_star_curve(const fs::path& file, const std::vector<double>& betas,
                        const json& meta) {
  auto os = open_out(file);
  os << "# " << meta.dump() << '\n';
  os << "beta,s_star\n";
  for (double b : betas) os << b << ',' << s_star_boundary(b) << '\n';
}

void write_return_map_iterates(const fs::path& file, const std::vector<LimitCycleResult>& runs,
                               const json& meta) {
  auto os = open_out(file);
  os << "# " << meta.dump() << '\n';
  os << "ic_index,burst_index,class";
  if (!runs.empty() && !runs.front().iterates.empty())
    state_header(os, runs.front().iterates.front().levels(),
                 runs.front().iterates.front().subpops());
  os << '\n';
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (std::size_t n = 0; n < runs[i].iterates.size(); ++n) {
      os << i << ',' << n + 1 << ',' << to_string(runs[i].cls);
      state_row(os, runs[i].iterates[n]);
      os << '\n';
    }
}

// ---------------------------------------------------------------------------

ModelSpec spec_from_config(const json& config, std::uint64_t seed) {
  if (!config.is_object()) throw config_error("config must be a JSON object");
  json doc = config;
  try {
    const int K = doc.at("K").get<int>();
    const int M = doc.at("M").get<int>();
    // A mean-field sweep may give only beta_list; its first entry stands in.
    if (!doc.contains("beta") && doc.contains("beta_list") && doc["beta_list"].is_array() &&
        !doc["beta_list"].empty())
      doc["beta"] = doc["beta_list"][0];
    const double beta = doc.at("beta").get<double>();
    if (!doc.contains("alpha") || !doc.contains("rho")) {
      if (K < 2 || M < 1) throw config_error("K must be at least 2 and M at least 1");
      auto rng = RngHandle::derive(seed, {0x5bec});
      const ModelSpec drawn = sample_spec(K, M, beta, rng);
      if (!doc.contains("alpha")) doc["alpha"] = drawn.alpha;
      if (!doc.contains("rho")) doc["rho"] = drawn.rho;
    }
    ModelSpec spec = model_spec_from_json(doc);
    const auto problems = validate_spec(spec);
    if (!problems.empty()) {
      std::string msg = "invalid spec:";
      for (const auto& p : problems) msg += " " + p + ";";
      throw config_error(msg);
    }
    return spec;
  } catch (const json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  } catch (const spec_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
}

namespace {

template <class T>
T get_or(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw config_error(std::string("config key '") + key + "': " + e.what());
  }
}

MeanState start_state(const json& config, const ModelSpec& spec) {
  if (!config.contains("x0")) return resting_state(spec);
  MeanState x;
  try {
    x = mean_state_from_json(config.at("x0"), spec.K, spec.M);
  } catch (const std::exception& e) {
    throw config_error(std::string("config key 'x0': ") + e.what());
  }
  if (!on_simplex_slice(x, spec.alpha, 1e-9))
    throw config_error("config key 'x0': state is not on the simplex slice of alpha");
  return x;
}

TimeChange time_change_from(const json& config, TimeChange fallback) {
  const auto name = get_or<std::string>(config, "time_change", "");
  if (name.empty()) return fallback;
  if (name == "unit") return TimeChange::unit;
  if (name == "mean_burst_size") return TimeChange::mean_burst_size;
  throw config_error("time_change must be 'unit' or 'mean_burst_size'");
}

std::vector<fs::path> simulate_stochastic(const json& config, const ModelSpec& spec,
                                          std::uint64_t seed, const fs::path& out,
                                          const json& meta) {
  const auto N = get_or<std::int64_t>(config, "N", 0);
  if (N < spec.M) throw config_error("stochastic mode needs N >= M");
  auto p_list = get_or<std::vector<double>>(config, "p_list", {});
  if (p_list.empty()) p_list.push_back(spec.beta / static_cast<double>(N));
  for (double p : p_list)
    if (!(p >= 0.0 && p <= 1.0)) throw config_error("p_list entries must lie in [0, 1]");
  const double T = get_or<double>(config, "T", 10.0 / spec.rho_min());
  const auto min_burst = get_or<std::int64_t>(config, "min_burst", 1);
  const bool events = get_or<bool>(config, "write_events", true);
  const MeanState x0 = start_state(config, spec);
  const auto sizes = subpopulation_sizes(spec.alpha, N);
  const CountState X0 = counts_from_fractions(x0, spec.alpha, sizes);

  std::vector<fs::path> files;
  std::vector<StochTrace> traces(p_list.size());
  std::vector<StochasticSpec> specs(p_list.size());
  for (std::size_t i = 0; i < p_list.size(); ++i) {
    StochasticSpec ss;
    ss.base = spec;
    ss.base.beta = p_list[i] * static_cast<double>(N);
    ss.N = N;
    ss.p = p_list[i];
    ss.seed = RngHandle::derive(seed, {static_cast<std::uint64_t>(i)}).seed();
    specs[i] = ss;
    traces[i] = run(ss, X0, T);
    json m = meta;
    m["run"] = to_json(ss);
    m["T"] = T;
    m["x0"] = to_json(x0);
    if (events) {
      const auto f = out / ("trace_p" + std::to_string(i) + ".csv");
      auto os = open_out(f);
      write_trace_csv(os, traces[i], X0, m);
      files.push_back(f);
    }
    const auto f = out / ("bursts_p" + std::to_string(i) + ".csv");
    auto os = open_out(f);
    write_burst_csv(os, traces[i], min_burst, m);
    files.push_back(f);
  }

  const auto fvp = out / "burst_vs_p.csv";
  {
    auto os = open_out(fvp);
    json m = meta;
    m["T"] = T;
    m["N"] = N;
    os << "# " << m.dump() << '\n';
    os << "p_index,p,beta,t,burst_size,burst_fraction\n";
    for (std::size_t i = 0; i < p_list.size(); ++i)
      for (const auto& b : traces[i].bursts)
        if (b.size >= min_burst)
          os << i << ',' << p_list[i] << ',' << specs[i].base.beta << ',' << b.t << ',' << b.size
             << ',' << static_cast<double>(b.size) / N << '\n';
  }
  files.push_back(fvp);

  const auto [lo, hi] = std::minmax_element(p_list.begin(), p_list.end());
  const double b_lo = std::max(1e-3, *lo * N * 0.9);
  const double b_hi = std::max(b_lo * 1.01, *hi * N * 1.1);
  const auto fs_curve = out / "sstar_curve.csv";
  write_s_star_curve(fs_curve, beta_grid(b_lo, b_hi, 400), meta);
  files.push_back(fs_curve);
  return files;
}

std::vector<fs::path> simulate_meanfield(const json& config, const ModelSpec& spec,
                                         std::uint64_t seed, const fs::path& out,
                                         const json& meta) {
  auto betas = get_or<std::vector<double>>(config, "beta_list", {});
  if (betas.empty()) betas.push_back(spec.beta);
  const TimeChange tc = time_change_from(config, TimeChange::unit);
  Horizon horizon = Horizon::defaults(spec);
  if (config.contains("T")) horizon.max_time = get_or<double>(config, "T", horizon.max_time);
  horizon.max_bursts = get_or<int>(config, "max_bursts", 30);
  const int n_initial = get_or<int>(config, "n_initial", 0);
  const int max_iter = get_or<int>(config, "max_iter", 20000);
  const double tol = get_or<double>(config, "tol", 1e-12);
  const MeanState x0 = start_state(config, spec);

  std::vector<fs::path> files;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    ModelSpec sb = spec;
    sb.beta = betas[i];
    if (!(sb.beta > 0.0)) throw config_error("beta_list entries must be positive");
    const auto traj = hybrid_run(x0, sb, horizon, tc);
    json m = meta;
    m["spec"] = to_json(sb);
    m["x0"] = to_json(x0);
    m["time_change"] = tc == TimeChange::unit ? "unit" : "mean_burst_size";
    m["bursts"] = traj.burst_times.size();
    m["stalled"] = traj.stalled;
    const std::string tag = "_b" + std::to_string(i) + ".csv";
    {
      const auto f = out / ("trajectory" + tag);
      auto os = open_out(f);
      write_trajectory_csv(os, traj, m);
      files.push_back(f);
    }
    const auto& last = traj.segments.back();
    const double t_end = std::isfinite(last.end_time) ? last.end_time
                                                      : last.start_time + 10.0 / sb.rho_min();
    const double dt = get_or<double>(config, "sample_dt", t_end / 1000.0);
    {
      const auto f = out / ("samples" + tag);
      auto os = open_out(f);
      write_samples_csv(os, traj, sb, dt, t_end, m);
      files.push_back(f);
    }
    if (sb.K == 2 && sb.beta > 2.0) {
      std::vector<LimitCycleResult> runs;
      runs.push_back(find_limit_cycle(sb, x0, tol, max_iter));
      for (int ic = 0; ic < n_initial; ++ic) {
        auto rng = RngHandle::derive(seed, {static_cast<std::uint64_t>(i),
                                            static_cast<std::uint64_t>(ic), 3});
        runs.push_back(find_limit_cycle(sb, sample_state(sb, rng), tol, max_iter));
      }
      json mr = m;
      mr["n_initial"] = n_initial;
      mr["tol"] = tol;
      const auto f = out / ("return_map" + tag);
      write_return_map_iterates(f, runs, mr);
      files.push_back(f);
    }
  }
  return files;
}

}  // namespace

std::vector<fs::path> simulate_from_config(const json& config, const fs::path& out_dir,
                                           std::optional<std::uint64_t> seed_override) {
  if (!config.is_object()) throw config_error("config must be a JSON object");
  const std::uint64_t seed = seed_override ? *seed_override : get_or<std::uint64_t>(config, "seed", 0);
  const ModelSpec spec = spec_from_config(config, seed);
  const auto mode = get_or<std::string>(config, "mode", "meanfield");
  json meta;
  meta["command"] = "simulate";
  meta["mode"] = mode;
  meta["seed"] = seed;
  meta["config"] = config;
  meta["spec"] = to_json(spec);
  if (mode == "stochastic") return simulate_stochastic(config, spec, seed, out_dir, meta);
  if (mode == "meanfield") return simulate_meanfield(config, spec, seed, out_dir, meta);
  throw config_error("mode must be 'stochastic' or 'meanfield'");
}

}  // namespace burstnet::experiments
