#include "burstnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace burstnet {

double ModelSpec::rho_min() const { return *std::min_element(rho.begin(), rho.end()); }
double ModelSpec::rho_max() const { return *std::max_element(rho.begin(), rho.end()); }

std::vector<std::string> validate_spec(const ModelSpec& spec) {
  std::vector<std::string> errors;
  if (spec.K < 2) errors.push_back("K >= 2 violated (K = " + std::to_string(spec.K) + ")");
  if (spec.M < 1) errors.push_back("M >= 1 violated (M = " + std::to_string(spec.M) + ")");
  if (spec.M >= 1 && spec.alpha.size() != static_cast<std::size_t>(spec.M))
    errors.push_back("alpha must have length M");
  if (spec.M >= 1 && spec.rho.size() != static_cast<std::size_t>(spec.M))
    errors.push_back("rho must have length M");

  for (std::size_t m = 0; m < spec.alpha.size(); ++m) {
    const double a = spec.alpha[m];
    if (!(a > 0.0)) errors.push_back("alpha_m > 0 violated at m = " + std::to_string(m));
    if (!(a < 1.0)) errors.push_back("alpha_m < 1 violated at m = " + std::to_string(m));
  }
  if (!spec.alpha.empty()) {
    const double total = std::accumulate(spec.alpha.begin(), spec.alpha.end(), 0.0);
    if (!(std::abs(total - 1.0) <= 1e-12)) {
      std::ostringstream os;
      os.precision(17);
      os << "sum_m alpha_m = 1 violated (sum = " << total << ")";
      errors.push_back(os.str());
    }
  }
  for (std::size_t m = 0; m < spec.rho.size(); ++m)
    if (!(spec.rho[m] > 0.0)) errors.push_back("rho_m > 0 violated at m = " + std::to_string(m));
  if (!(spec.beta > 0.0)) errors.push_back("beta > 0 violated");
  return errors;
}

void require_valid(const ModelSpec& spec) {
  const auto errors = validate_spec(spec);
  if (errors.empty()) return;
  std::string msg = "invalid model spec:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw spec_error(msg);
}

void require_shape(const ModelSpec& spec) {
  if (spec.K < 2) throw spec_error("K must be at least 2");
  if (spec.M < 1) throw spec_error("M must be at least 1");
  if (spec.alpha.size() != static_cast<std::size_t>(spec.M) ||
      spec.rho.size() != static_cast<std::size_t>(spec.M))
    throw spec_error("alpha and rho must have length M");
  for (double r : spec.rho)
    if (!(r > 0.0)) throw spec_error("rho_m must be positive");
  if (!(spec.beta > 0.0)) throw spec_error("beta must be positive");
}

StochasticSpec StochasticSpec::from_model(const ModelSpec& base, std::int64_t N,
                                          std::uint64_t seed) {
  if (N < base.M) throw spec_error("N must be at least M");
  return StochasticSpec{base, N, base.beta / static_cast<double>(N), seed};
}

std::vector<std::int64_t> StochasticSpec::sizes() const { return subpopulation_sizes(base.alpha, N); }

std::vector<std::int64_t> subpopulation_sizes(std::span<const double> alpha, std::int64_t N) {
  const std::size_t M = alpha.size();
  std::vector<std::int64_t> sizes(M);
  std::vector<double> remainder(M);
  std::int64_t assigned = 0;
  for (std::size_t m = 0; m < M; ++m) {
    const double target = alpha[m] * static_cast<double>(N);
    sizes[m] = static_cast<std::int64_t>(std::floor(target));
    remainder[m] = target - static_cast<double>(sizes[m]);
    assigned += sizes[m];
  }
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), 0);
  // Ties go to the lower index so the result is deterministic.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < N && i < M; ++i, ++assigned) ++sizes[order[i]];
  return sizes;
}

double MeanState::level_sum(int k) const {
  double s = 0.0;
  for (int m = 0; m < M_; ++m) s += (*this)(k, m);
  return s;
}

double MeanState::subpop_sum(int m) const {
  double s = 0.0;
  for (int k = 0; k < K_; ++k) s += (*this)(k, m);
  return s;
}

void MeanState::close_level_zero(std::span<const double> alpha) {
  for (int m = 0; m < M_; ++m) {
    double upper = 0.0;
    for (int k = 1; k < K_; ++k) upper += (*this)(k, m);
    (*this)(0, m) = alpha[m] - upper;
  }
}

double distance(const MeanState& a, const MeanState& b) {
  double s = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) s += (da[i] - db[i]) * (da[i] - db[i]);
  return std::sqrt(s);
}

bool on_simplex_slice(const MeanState& x, std::span<const double> alpha, double tol_sum,
                      double tol_neg) {
  if (alpha.size() != static_cast<std::size_t>(x.subpops())) return false;
  for (double v : x.data())
    if (!(v >= -tol_neg)) return false;
  for (int m = 0; m < x.subpops(); ++m)
    if (!(std::abs(x.subpop_sum(m) - alpha[m]) <= tol_sum)) return false;
  return true;
}

Region classify(const MeanState& x, double beta) {
  return x.level_sum(x.levels() - 1) >= 1.0 / beta ? Region::Burst : Region::Flow;
}

MeanState equilibrium(const ModelSpec& spec) {
  require_shape(spec);
  MeanState x(spec.K, spec.M);
  for (int k = 0; k < spec.K; ++k)
    for (int m = 0; m < spec.M; ++m) x(k, m) = spec.alpha[m] / spec.K;
  return x;
}

nlohmann::json to_json(const ModelSpec& spec) {
  return {{"K", spec.K}, {"M", spec.M}, {"alpha", spec.alpha}, {"rho", spec.rho}, {"beta", spec.beta}};
}

nlohmann::json to_json(const StochasticSpec& spec) {
  auto doc = to_json(spec.base);
  doc["N"] = spec.N;
  doc["p"] = spec.p;
  doc["seed"] = spec.seed;
  return doc;
}

namespace {

template <class T>
T required(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key)) throw spec_error(std::string("missing field \"") + key + "\"");
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw spec_error(std::string("field \"") + key + "\": " + e.what());
  }
}

}  // namespace

ModelSpec model_spec_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw spec_error("config must be a JSON object");
  ModelSpec spec;
  spec.K = required<int>(doc, "K");
  spec.M = required<int>(doc, "M");
  spec.alpha = required<std::vector<double>>(doc, "alpha");
  spec.rho = required<std::vector<double>>(doc, "rho");
  spec.beta = required<double>(doc, "beta");
  if (spec.alpha.size() != static_cast<std::size_t>(spec.M))
    throw spec_error("alpha must have length M");
  if (spec.rho.size() != static_cast<std::size_t>(spec.M))
    throw spec_error("rho must have length M");
  return spec;
}

StochasticSpec stochastic_spec_from_json(const nlohmann::json& doc) {
  StochasticSpec s;
  s.base = model_spec_from_json(doc);
  s.N = required<std::int64_t>(doc, "N");
  if (s.N < s.base.M) throw spec_error("N must be at least M");
  s.p = doc.contains("p") ? required<double>(doc, "p") : s.base.beta / static_cast<double>(s.N);
  s.seed = doc.contains("seed") ? required<std::uint64_t>(doc, "seed") : 0;
  if (!(s.p >= 0.0 && s.p <= 1.0)) throw spec_error("p must lie in [0, 1]");
  return s;
}

nlohmann::json to_json(const MeanState& x) {
  auto rows = nlohmann::json::array();
  for (int k = 0; k < x.levels(); ++k) {
    std::vector<double> row(x.subpops());
    for (int m = 0; m < x.subpops(); ++m) row[m] = x(k, m);
    rows.push_back(row);
  }
  return rows;
}

MeanState mean_state_from_json(const nlohmann::json& doc, int K, int M) {
  if (!doc.is_array() || doc.size() != static_cast<std::size_t>(K))
    throw spec_error("state must be an array of K rows");
  MeanState x(K, M);
  for (int k = 0; k < K; ++k) {
    const auto row = doc[k].get<std::vector<double>>();
    if (row.size() != static_cast<std::size_t>(M)) throw spec_error("state rows must have length M");
    for (int m = 0; m < M; ++m) x(k, m) = row[m];
  }
  return x;
}

}  // namespace burstnet
