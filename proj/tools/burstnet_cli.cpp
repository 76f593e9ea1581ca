// burstnet: experiment driver writing CSV files with a '#'-JSON metadata line.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "burstnet/experiments.hpp"

namespace fs = std::filesystem;
namespace ex = burstnet::experiments;
using nlohmann::json;

namespace {

template <class T>
void take(const json& cfg, const char* key, T& target) {
  if (!cfg.contains(key)) return;
  try {
    target = cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ex::config_error(std::string("config key '") + key + "': " + e.what());
  }
}

json optional_config(const std::string& path) {
  return path.empty() ? json::object() : ex::load_config(path);
}

int cmd_simulate(const std::string& config, const fs::path& out,
                 std::optional<std::uint64_t> seed) {
  const json cfg = ex::load_config(config);
  const auto files = ex::simulate_from_config(cfg, out, seed);
  json echo;
  echo["command"] = "simulate";
  echo["seed"] = seed ? *seed : cfg.value("seed", std::uint64_t{0});
  echo["spec"] = burstnet::to_json(ex::spec_from_config(cfg, echo["seed"].get<std::uint64_t>()));
  echo["files"] = json::array();
  for (const auto& f : files) echo["files"].push_back(f.string());
  std::cout << echo.dump() << '\n';
  return ex::kExitOk;
}

struct CompareFlags {
  std::string config;
  std::vector<std::int64_t> n_list;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<double> gamma;
  std::optional<double> T;
  std::optional<int> seeds;
  int workers = 1;
};

int cmd_compare(const CompareFlags& f, const fs::path& out) {
  const json cfg = ex::load_config(f.config);
  ex::CompareOptions opts;
  take(cfg, "n_list", opts.n_list);
  take(cfg, "seeds", opts.seeds);
  take(cfg, "seed", opts.seed);
  take(cfg, "T", opts.T);
  take(cfg, "epsilon", opts.epsilon);
  take(cfg, "gamma", opts.gamma);
  take(cfg, "grid_points", opts.grid_points);
  if (cfg.contains("time_change")) {
    const auto tc = cfg.at("time_change").get<std::string>();
    if (tc == "unit")
      opts.time_change = burstnet::TimeChange::unit;
    else if (tc == "mean_burst_size")
      opts.time_change = burstnet::TimeChange::mean_burst_size;
    else
      throw ex::config_error("time_change must be 'unit' or 'mean_burst_size'");
  }
  if (!f.n_list.empty()) opts.n_list = f.n_list;
  if (f.seed) opts.seed = *f.seed;
  if (f.epsilon) opts.epsilon = *f.epsilon;
  if (f.gamma) opts.gamma = *f.gamma;
  if (f.T) opts.T = *f.T;
  if (f.seeds) opts.seeds = *f.seeds;
  opts.workers = f.workers;
  const auto spec = ex::spec_from_config(cfg, opts.seed);
  if (cfg.contains("x0")) {
    try {
      opts.x0 = burstnet::mean_state_from_json(cfg.at("x0"), spec.K, spec.M);
    } catch (const std::exception& e) {
      throw ex::config_error(std::string("config key 'x0': ") + e.what());
    }
  }

  const auto reports = ex::compare(spec, opts);
  json meta;
  meta["command"] = "compare";
  meta["seed"] = opts.seed;
  meta["config"] = cfg;
  meta["spec"] = burstnet::to_json(spec);
  meta["n_list"] = opts.n_list;
  meta["seeds"] = opts.seeds;
  meta["grid_points"] = opts.grid_points;
  meta["time_change"] =
      opts.time_change == burstnet::TimeChange::unit ? "unit" : "mean_burst_size";
  if (!reports.empty()) {
    meta["T"] = reports.front().T;
    meta["epsilon"] = reports.front().epsilon;
    meta["gamma"] = reports.front().gamma;
  }
  ex::write_compare(out, reports, meta);
  std::cout << meta.dump() << '\n';
  for (const auto& r : reports)
    std::cout << "N=" << r.N << " median_burst_time_error=" << r.median_burst_time_error
              << " median_sup_distance=" << r.median_sup_distance
              << " mean_big_burst_fraction=" << r.mean_big_burst_fraction
              << " mismatched=" << r.mismatched << '\n';
  return ex::kExitOk;
}

int cmd_phase(const std::string& config, ex::PhaseOptions opts, const fs::path& out,
              const std::vector<int>& m_flag, const std::optional<std::uint64_t>& seed,
              const std::optional<int>& n_ic) {
  const json cfg = optional_config(config);
  take(cfg, "m_list", opts.m_list);
  take(cfg, "n_ic", opts.n_ic);
  take(cfg, "seed", opts.seed);
  take(cfg, "tol", opts.tol);
  take(cfg, "max_iter", opts.max_iter);
  if (!m_flag.empty()) opts.m_list = m_flag;
  if (seed) opts.seed = *seed;
  if (n_ic) opts.n_ic = *n_ic;
  const auto rows = ex::phase_diagram(opts);
  json meta;
  meta["command"] = "phase-diagram";
  meta["seed"] = opts.seed;
  meta["m_list"] = opts.m_list;
  meta["beta_min"] = opts.beta_min;
  meta["beta_max"] = opts.beta_max;
  meta["beta_steps"] = opts.beta_steps;
  meta["n_ic"] = opts.n_ic;
  meta["tol"] = opts.tol;
  meta["max_iter"] = opts.max_iter;
  json specs = json::object();
  for (int M : opts.m_list)
    specs[std::to_string(M)] = burstnet::to_json(ex::phase_spec(M, opts.beta_min, opts.seed));
  meta["specs"] = specs;
  ex::write_phase_diagram(out / "phase_diagram.csv", rows, meta);
  std::cout << meta.dump() << '\n';
  return ex::kExitOk;
}

int cmd_sweep(ex::SweepOptions opts, const fs::path& out, const std::vector<int>& m_flag) {
  if (!m_flag.empty()) opts.m_list = m_flag;
  const auto rows = ex::stability_sweep(opts);
  json meta;
  meta["command"] = "stability-sweep";
  meta["seed"] = opts.seed;
  meta["m_list"] = opts.m_list;
  meta["trials"] = opts.trials;
  ex::write_stability_sweep(out / "stability_sweep.csv", rows, meta);
  {
    std::ofstream os(out / "beta_threshold.csv");
    os << "# " << meta.dump() << '\n' << "M,beta_threshold\n";
    os.precision(17);
    for (int M : opts.m_list) os << M << ',' << burstnet::beta_threshold(M) << '\n';
  }
  const auto failures = ex::check_stretch_bounds(rows);
  std::cout << meta.dump() << '\n';
  for (const auto& msg : failures) std::cerr << "bound violated: " << msg << '\n';
  if (!failures.empty()) throw ex::bound_violation(std::to_string(failures.size()) + " rows");
  std::cout << "bounds held in " << rows.size() << " trials\n";
  return ex::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-population burst network experiments"};
  app.require_subcommand(1);
  std::string out = "out";
  app.add_option("--out", out, "output directory");

  std::string sim_config;
  std::optional<std::uint64_t> sim_seed;
  auto* sim = app.add_subcommand("simulate", "stochastic or mean-field traces from a config");
  sim->add_option("--config", sim_config, "config JSON")->required();
  sim->add_option("--out", out, "output directory");
  sim->add_option("--seed", sim_seed, "override the config seed");

  CompareFlags cmp_flags;
  auto* cmp = app.add_subcommand("compare", "stochastic vs mean-field at increasing N");
  cmp->add_option("--config", cmp_flags.config, "config JSON")->required();
  cmp->add_option("--out", out, "output directory");
  cmp->add_option("--n-list", cmp_flags.n_list, "network sizes")->delimiter(',');
  cmp->add_option("--seed", cmp_flags.seed, "base seed");
  cmp->add_option("--seeds", cmp_flags.seeds, "runs per N");
  cmp->add_option("--T", cmp_flags.T, "time horizon");
  cmp->add_option("--epsilon", cmp_flags.epsilon, "excision half-width");
  cmp->add_option("--gamma", cmp_flags.gamma, "big-burst threshold fraction");
  cmp->add_option("--workers", cmp_flags.workers, "worker threads")->check(CLI::PositiveNumber);

  std::string phase_config;
  ex::PhaseOptions phase_opts;
  std::vector<int> phase_m;
  std::optional<std::uint64_t> phase_seed;
  std::optional<int> phase_n_ic;
  auto* phase = app.add_subcommand("phase-diagram", "convergence classes over a beta grid");
  phase->add_option("--config", phase_config, "optional config JSON");
  phase->add_option("--out", out, "output directory");
  phase->add_option("--m-list", phase_m, "subpopulation counts")->delimiter(',');
  phase->add_option("--beta-min", phase_opts.beta_min, "smallest beta");
  phase->add_option("--beta-max", phase_opts.beta_max, "largest beta");
  phase->add_option("--beta-steps", phase_opts.beta_steps, "grid points");
  phase->add_option("--n-ic", phase_n_ic, "initial conditions per cell");
  phase->add_option("--seed", phase_seed, "base seed");
  phase->add_option("--tol", phase_opts.tol, "fixed-point step tolerance");
  phase->add_option("--max-iter", phase_opts.max_iter, "return-map iterations per run");
  phase->add_option("--workers", phase_opts.workers, "worker threads")->check(CLI::PositiveNumber);

  ex::SweepOptions sweep_opts;
  std::vector<int> sweep_m;
  auto* sweep = app.add_subcommand("stability-sweep", "stopped-flow stretch bound trials");
  sweep->add_option("--out", out, "output directory");
  sweep->add_option("--m-list", sweep_m, "subpopulation counts")->delimiter(',');
  sweep->add_option("--trials", sweep_opts.trials, "trials per M");
  sweep->add_option("--seed", sweep_opts.seed, "base seed");
  sweep->add_option("--workers", sweep_opts.workers, "worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return ex::kExitConfig;
  }

  try {
    if (*sim) return cmd_simulate(sim_config, out, sim_seed);
    if (*cmp) return cmd_compare(cmp_flags, out);
    if (*phase) return cmd_phase(phase_config, phase_opts, out, phase_m, phase_seed, phase_n_ic);
    if (*sweep) return cmd_sweep(sweep_opts, out, sweep_m);
  } catch (const ex::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ex::kExitConfig;
  } catch (const burstnet::spec_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ex::kExitConfig;
  } catch (const ex::bound_violation& e) {
    std::cerr << "bound violated: " << e.what() << '\n';
    return ex::kExitBound;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return ex::kExitOk;
}
