#include "lpiopt/optimizer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "lpiopt/errors.hpp"
#include "lpiopt/spectra.hpp"

namespace lpiopt {

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> read_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

class Stopwatch {
 public:
  explicit Stopwatch(std::optional<double> limit) : limit_(limit), start_(std::chrono::steady_clock::now()) {}
  bool expired() const {
    if (!limit_) return false;
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
    return elapsed.count() > *limit_;
  }

 private:
  std::optional<double> limit_;
  std::chrono::steady_clock::time_point start_;
};

void finish(RunReport& report, const LossProblem& problem, const Dataset& data, const Eigen::VectorXd& theta,
            const RunOptions& opts) {
  report.final_theta = theta;
  report.f_star = opts.f_star;
  if (opts.f_star && opts.epsilon) {
    report.converged = !report.iterates.empty() && report.iterates.back().F - *opts.f_star <= *opts.epsilon;
  }
  report.config["n"] = data.size();
  report.config["d"] = data.dim();
  report.config["p"] = problem.p;
  report.config["problem"] = problem.name;
  report.config["audit"] = opts.audit;
}

void check_theta(const LossProblem& problem, const Eigen::VectorXd& theta0) {
  if (theta0.size() != problem.p) {
    throw InputError(fmt::format("theta0 has {} entries, problem expects p = {}", theta0.size(), problem.p));
  }
}

}  // namespace

std::string to_string(ScheduleMode mode) { return mode == ScheduleMode::theory ? "theory" : "practical"; }

nlohmann::json Schedule::to_json() const {
  nlohmann::json j;
  j["mode"] = to_string(mode);
  j["T"] = T;
  j["delta"] = std::isfinite(delta) ? nlohmann::json(delta) : nlohmann::json(nullptr);
  j["m"] = m;
  j["h"] = h;
  j["l"] = l;
  j["kernel"] = kernel;
  if (mode == ScheduleMode::theory) {
    j["log10_m"] = log10_m;
    j["log_h"] = log_h;
    j["infeasible"] = infeasible;
    j["practical_mode_required"] = practical_mode_required;
  }
  return j;
}

Schedule practical_schedule(int T, int m, double h, int l, const std::string& kernel) {
  if (T < 1) throw std::invalid_argument("practical_schedule: T must be >= 1");
  if (m < 1) throw std::invalid_argument("practical_schedule: m must be >= 1");
  if (!(h > 0.0 && h < 0.5)) throw std::invalid_argument("practical_schedule: h must lie in (0, 1/2)");
  if (l < 0) throw std::invalid_argument("practical_schedule: l must be >= 0");
  Schedule s;
  s.T = T;
  s.m = m;
  s.h = h;
  s.l = l;
  s.kernel = kernel;
  s.delta = std::numeric_limits<double>::quiet_NaN();
  s.mode = ScheduleMode::practical;
  s.log10_m = std::log10(static_cast<double>(m));
  s.log_h = std::log(h);
  return s;
}

int theory_iterations(double sigma, double mu, double gap, double p, double epsilon) {
  if (!(sigma > 1.0)) {
    throw UnsupportedRegimeError("theory schedule needs sigma = L1/mu > 1; log(sigma/(sigma-1)) is undefined at 1");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("theory schedule: epsilon must be positive");
  if (!(mu > 0.0) || !(p > 0.0)) throw std::invalid_argument("theory schedule: mu and p must be positive");
  if (!(gap >= 0.0)) throw std::invalid_argument("theory schedule: F(theta0) - F_* must be >= 0");
  const double num = std::log((gap + p / (2.0 * mu)) / epsilon);
  const double den = std::log(sigma / (sigma - 1.0));
  return std::max(1, static_cast<int>(std::ceil(num / den)));
}

Schedule theory_schedule(const ScheduleInputs& in, std::uint64_t cap) {
  Schedule s;
  s.mode = ScheduleMode::theory;
  s.T = theory_iterations(in.sigma, in.mu, in.gap, in.p, in.epsilon);
  s.delta = std::pow(1.0 - 1.0 / in.sigma, 0.5 * s.T);
  s.l = holder_order(in.eta);
  if (s.l < 1) {
    // Lambda(d, l) is only defined for l >= 1.
    s.infeasible = true;
    s.practical_mode_required = true;
    return s;
  }
  const TheoryGridSize grid = theory_grid_size(s.delta, in.d, s.l, in.eta, in.constants, cap);
  s.log10_m = grid.log10_m;
  s.infeasible = grid.infeasible || !grid.m || *grid.m > static_cast<std::uint64_t>(std::numeric_limits<int>::max());
  if (!s.infeasible) s.m = static_cast<int>(*grid.m);
  const TheoryBandwidth bw = theory_bandwidth_log(grid.log10_m * std::numbers::ln10, in.d, s.l, in.constants);
  s.log_h = bw.log_h;
  s.h = bw.h;
  s.practical_mode_required = bw.practical_mode_required;
  return s;
}

Schedule theory_schedule(const LossProblem& problem, const Dataset& data, const Eigen::VectorXd& theta0,
                         double epsilon, const std::string& kernel, std::uint64_t cap) {
  check_theta(problem, theta0);
  double f_star_value = 0.0;
  if (problem.minimizer) {
    f_star_value = f_star(problem, data).value;
  } else if (problem.f_star_hint) {
    f_star_value = *problem.f_star_hint;
  } else {
    throw ConfigError("theory schedule needs F_*: the problem has no closed-form minimizer and no f_star_hint");
  }
  const Kernel k = kernel_by_name(kernel);
  ScheduleInputs in;
  in.sigma = problem.sigma();
  in.mu = problem.mu;
  in.gap = std::max(0.0, erm_objective(problem, data, as_span(theta0)) - f_star_value);
  in.p = problem.p;
  in.epsilon = epsilon;
  in.d = problem.d;
  in.eta = problem.eta;
  in.constants = {problem.L2, k.lower(), k.upper()};
  Schedule s = theory_schedule(in, cap);
  s.kernel = kernel;
  return s;
}

// ---------------------------------------------------------------------------
// Reports

std::optional<int> RunReport::first_hit(double eps) const {
  if (!f_star) return std::nullopt;
  for (const auto& r : iterates) {
    if (r.F - *f_star <= eps) return r.t;
  }
  return std::nullopt;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json series = nlohmann::json::array();
  for (const auto& r : iterates) {
    series.push_back({{"t", r.t},
                      {"F", r.F},
                      {"grad_err", optional_number(r.grad_err)},
                      {"coord_sup_err", optional_number(r.coord_sup_err)},
                      {"oracle_count", r.oracle_count}});
  }
  return {{"optimizer", optimizer},
          {"iterates", series},
          {"final_theta", to_vec(final_theta)},
          {"converged", converged},
          {"partial", partial},
          {"f_star", optional_number(f_star)},
          {"config", config},
          {"note", note}};
}

RunReport RunReport::from_json(const nlohmann::json& j) {
  RunReport r;
  r.optimizer = j.at("optimizer").get<std::string>();
  for (const auto& it : j.at("iterates")) {
    IterationRecord rec;
    rec.t = it.at("t").get<int>();
    rec.F = it.at("F").get<double>();
    rec.grad_err = read_optional(it, "grad_err");
    rec.coord_sup_err = read_optional(it, "coord_sup_err");
    rec.oracle_count = it.at("oracle_count").get<std::uint64_t>();
    r.iterates.push_back(rec);
  }
  r.final_theta = from_vec(j.at("final_theta").get<std::vector<double>>());
  r.converged = j.at("converged").get<bool>();
  r.partial = j.value("partial", false);
  r.f_star = read_optional(j, "f_star");
  r.config = j.value("config", nlohmann::json::object());
  r.note = j.value("note", "");
  return r;
}

std::string RunReport::to_csv() const {
  std::string out = "t,F,grad_err,oracle_count\n";
  for (const auto& r : iterates) {
    out += fmt::format("{},{:.17g},{},{}\n", r.t, r.F, r.grad_err ? fmt::format("{:.17g}", *r.grad_err) : "",
                       r.oracle_count);
  }
  return out;
}

std::vector<IterationRecord> parse_series_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "t,F,grad_err,oracle_count") {
    throw InputError("series CSV: unexpected header");
  }
  std::vector<IterationRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() == 3) cells.emplace_back();
    if (cells.size() != 4) throw InputError("series CSV: expected 4 columns in '" + line + "'");
    IterationRecord r;
    r.t = std::stoi(cells[0]);
    r.F = std::stod(cells[1]);
    if (!cells[2].empty()) r.grad_err = std::stod(cells[2]);
    r.oracle_count = std::stoull(cells[3]);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weight cache

std::shared_ptr<const LocalFit> WeightCache::get(const InterpConfig& cfg, const UniformGrid& grid,
                                                 std::span<const double> x) {
  std::vector<std::uint64_t> coords;
  coords.reserve(x.size());
  for (double v : x) coords.push_back(std::bit_cast<std::uint64_t>(v));
  Key key{cfg.m, grid.dim(), cfg.l, std::bit_cast<std::uint64_t>(cfg.h), cfg.kernel.name(), std::move(coords)};
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      ++hits_;
      return it->second;
    }
  }
  auto fit = std::make_shared<const LocalFit>(local_fit(cfg, grid, x));
  std::lock_guard lock(mutex_);
  return entries_.emplace(std::move(key), std::move(fit)).first->second;
}

std::size_t WeightCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Optimizers

RunReport lpi_gd_run(CountingOracle& oracle, const Dataset& data, const Schedule& schedule,
                     const Eigen::VectorXd& theta0, const RunOptions& opts) {
  const LossProblem& problem = oracle.problem();
  check_theta(problem, theta0);
  if (data.dim() != problem.d) throw InputError("lpi_gd_run: dataset dimension differs from the problem's");
  if (schedule.T < 1) throw std::invalid_argument("lpi_gd_run: T must be >= 1");
  if (schedule.infeasible || schedule.m < 1) {
    throw ResourceError(fmt::format("lpi_gd_run: schedule infeasible (log10 m = {:.6g}, d = {})", schedule.log10_m,
                                    problem.d));
  }
  const int d = problem.d;
  const int p = problem.p;
  const UniformGrid grid = uniform_grid(schedule.m, d, opts.grid_cap ? opts.grid_cap : grid_cap());

  InterpConfig cfg;
  cfg.m = schedule.m;
  cfg.h = schedule.h;
  cfg.l = schedule.l;
  cfg.kernel = kernel_by_name(schedule.kernel);
  cfg.validate();

  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.sample(i)) {
      if (v < schedule.h || v > 1.0 - schedule.h) {
        throw DomainError(fmt::format("lpi_gd_run: sample {} leaves [h, 1-h]^d with h = {}", i, schedule.h));
      }
    }
  }

  // Step 2: per-sample weights, computed once and reused every iteration.
  WeightCache local_cache;
  WeightCache& cache = opts.cache ? *opts.cache : local_cache;
  std::vector<std::shared_ptr<const LocalFit>> fits(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      fits[i] = cache.get(cfg, grid, data.sample(i));
    } catch (const IllPosedFitError& e) {
      throw IllPosedFitError(fmt::format("ill-posed local fit at sample {}: {}", i, e.what()), e.lambda_min(),
                             e.condition());
    }
  }

  const std::uint64_t G = grid.size();
  RunReport report;
  report.optimizer = "lpi-gd";
  report.config = {{"schedule", schedule.to_json()}};
  Eigen::VectorXd theta = theta0;
  report.iterates.push_back({0, erm_objective(problem, data, as_span(theta)), std::nullopt, std::nullopt, 0});

  // grid_grad(k, y) = coordinate k of the oracle answer at grid point y.
  Eigen::MatrixXd grid_grad(p, static_cast<Eigen::Index>(G));
  std::vector<double> point(static_cast<size_t>(d));
  Eigen::VectorXd est(p), sample_est(p), true_sample(p);
  std::uint64_t gamma = 0;
  Stopwatch clock(opts.max_runtime_s);

  for (int t = 1; t <= schedule.T; ++t) {
    if (clock.expired()) {
      report.partial = true;
      break;
    }
    const std::span<const double> th = as_span(theta);
    for (std::uint64_t y = 0; y < G; ++y) {
      grid.point(y, point);
      oracle.query(point, th, std::span<double>(grid_grad.col(static_cast<Eigen::Index>(y)).data(),
                                                static_cast<size_t>(p)));
    }
    gamma += G;

    est.setZero();
    double coord_sup = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      sample_est.setZero();
      for (const auto& [idx, w] : fits[i]->weights) sample_est += w * grid_grad.col(static_cast<Eigen::Index>(idx));
      est += sample_est;
      if (opts.audit) {
        problem.grad_theta(data.sample(i), th, std::span<double>(true_sample.data(), static_cast<size_t>(p)));
        coord_sup = std::max(coord_sup, (sample_est - true_sample).cwiseAbs().maxCoeff());
      }
    }
    est /= static_cast<double>(data.size());

    IterationRecord rec;
    rec.t = t;
    if (opts.audit) {
      // Out-of-band: not routed through the counting oracle.
      const Eigen::VectorXd truth = erm_gradient(problem, data, th);
      rec.grad_err = (est - truth).norm();
      rec.coord_sup_err = coord_sup;
    }
    theta -= est / problem.L1;
    rec.F = erm_objective(problem, data, as_span(theta));
    rec.oracle_count = gamma;
    report.iterates.push_back(rec);
  }
  finish(report, problem, data, theta, opts);
  report.config["grid_points"] = G;
  return report;
}

RunReport gd_run(CountingOracle& oracle, const Dataset& data, int T, const Eigen::VectorXd& theta0,
                 const RunOptions& opts) {
  const LossProblem& problem = oracle.problem();
  check_theta(problem, theta0);
  if (T < 1) throw std::invalid_argument("gd_run: T must be >= 1");
  const int p = problem.p;
  RunReport report;
  report.optimizer = "gd";
  report.config = {{"T", T}};
  Eigen::VectorXd theta = theta0;
  report.iterates.push_back({0, erm_objective(problem, data, as_span(theta)), std::nullopt, std::nullopt, 0});
  Eigen::VectorXd grad(p), g(p);
  std::uint64_t gamma = 0;
  Stopwatch clock(opts.max_runtime_s);
  for (int t = 1; t <= T; ++t) {
    if (clock.expired()) {
      report.partial = true;
      break;
    }
    grad.setZero();
    for (std::size_t i = 0; i < data.size(); ++i) {
      oracle.query(data.sample(i), as_span(theta), std::span<double>(g.data(), static_cast<size_t>(p)));
      grad += g;
    }
    grad /= static_cast<double>(data.size());
    gamma += data.size();
    IterationRecord rec;
    rec.t = t;
    if (opts.audit) {
      rec.grad_err = 0.0;
      rec.coord_sup_err = 0.0;
    }
    theta -= grad / problem.L1;
    rec.F = erm_objective(problem, data, as_span(theta));
    rec.oracle_count = gamma;
    report.iterates.push_back(rec);
  }
  finish(report, problem, data, theta, opts);
  return report;
}

RunReport sgd_run(CountingOracle& oracle, const Dataset& data, int T, const Eigen::VectorXd& theta0,
                  std::uint64_t seed, bool with_replacement, const RunOptions& opts) {
  const LossProblem& problem = oracle.problem();
  check_theta(problem, theta0);
  if (T < 1) throw std::invalid_argument("sgd_run: T must be >= 1");
  const int p = problem.p;
  const std::size_t n = data.size();
  RunReport report;
  report.optimizer = "sgd";
  report.config = {{"T", T}, {"seed", seed}, {"with_replacement", with_replacement}};
  report.note = "SGD guarantees hold in expectation only";
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = n;

  Eigen::VectorXd theta = theta0;
  report.iterates.push_back({0, erm_objective(problem, data, as_span(theta)), std::nullopt, std::nullopt, 0});
  Eigen::VectorXd g(p);
  std::uint64_t gamma = 0;
  Stopwatch clock(opts.max_runtime_s);
  for (int t = 1; t <= T; ++t) {
    if (clock.expired()) {
      report.partial = true;
      break;
    }
    std::size_t idx;
    if (with_replacement) {
      idx = pick(rng);
    } else {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx = order[cursor++];
    }
    oracle.query(data.sample(idx), as_span(theta), std::span<double>(g.data(), static_cast<size_t>(p)));
    ++gamma;
    IterationRecord rec;
    rec.t = t;
    if (opts.audit) rec.grad_err = (g - erm_gradient(problem, data, as_span(theta))).norm();
    theta -= g / (problem.mu * t);
    rec.F = erm_objective(problem, data, as_span(theta));
    rec.oracle_count = gamma;
    report.iterates.push_back(rec);
  }
  finish(report, problem, data, theta, opts);
  return report;
}

// ---------------------------------------------------------------------------
// Bounds

BoundTrace inexact_bound_trace(const RunReport& report, const LossProblem& problem, double slack) {
  if (!report.f_star) throw ConfigError("inexact_bound_trace: report carries no F_*");
  if (report.iterates.empty()) throw InputError("inexact_bound_trace: empty report");
  for (std::size_t k = 1; k < report.iterates.size(); ++k) {
    if (!report.iterates[k].grad_err) throw InputError("inexact_bound_trace: report was not audited");
  }
  const double q = 1.0 - 1.0 / problem.sigma();
  const double f_star_value = *report.f_star;
  const double gap0 = report.iterates.front().F - f_star_value;
  BoundTrace out;
  double err_sum = 0.0;  // sum_{t <= T'} q^{T'-t} e_t^2, updated recursively
  double contraction = 1.0;
  for (std::size_t k = 0; k < report.iterates.size(); ++k) {
    if (k > 0) {
      const double e = *report.iterates[k].grad_err;
      err_sum = q * err_sum + e * e;
      contraction *= q;
    }
    const double lhs = report.iterates[k].F - f_star_value;
    const double rhs = contraction * gap0 + err_sum / (2.0 * problem.L1);
    const bool ok = lhs <= rhs + slack;
    out.lhs.push_back(lhs);
    out.rhs.push_back(rhs);
    out.holds.push_back(ok);
    if (!ok && !out.first_violation) out.first_violation = static_cast<int>(k);
  }
  return out;
}

double log_complexity_constant(double mu, double L1, double L2, double b, double c, int d, int l) {
  const double sigma = L1 / mu;
  if (!(sigma > 1.0)) throw UnsupportedRegimeError("oracle bound needs sigma = L1/mu > 1");
  const double log_lambda = lambda_log(d, l).log_value;
  const double log_three_e = std::log(3.0) + 1.0;
  return std::log(sigma + 2.0 * (L1 - mu)) - std::log((L1 - mu) * std::log(sigma / (sigma - 1.0))) +
         d * std::log(220.0 * (2.0 * L2 + 1.0) * c / b) + d * std::log(static_cast<double>(d)) +
         static_cast<double>(d) * d * log_three_e - 2.0 * d * log_lambda;
}

OracleBounds oracle_bound_eval(const BoundInputs& in) {
  if (!(in.epsilon > 0.0)) throw std::invalid_argument("oracle_bound_eval: epsilon must be positive");
  OracleBounds out;
  const double threshold = (in.L1 - in.mu) * in.p / (2.0 * in.L1 * in.mu);
  if (in.epsilon > threshold) {
    out.precondition_ok = false;
    out.warning = fmt::format("epsilon = {:.6g} exceeds (L1 - mu) p / (2 L1 mu) = {:.6g}; bound evaluated anyway",
                              in.epsilon, threshold);
  }
  out.log_C = log_complexity_constant(in.mu, in.L1, in.L2, in.b, in.c, in.d, in.l);
  const double ratio = (in.p + 2.0 * in.mu * in.F_gap) / in.epsilon;
  out.log_lpi = out.log_C + in.d / (2.0 * in.eta) * std::log(ratio) + std::log(std::log(ratio / (2.0 * in.mu)));
  out.log10_lpi = out.log_lpi / std::numbers::ln10;
  out.gd_bound = in.n * std::log(1.0 / in.epsilon);
  out.sgd_bound = 1.0 / in.epsilon;
  out.log10_gd = std::log10(out.gd_bound);
  out.log10_sgd = std::log10(out.sgd_bound);
  return out;
}

}  // namespace lpiopt
