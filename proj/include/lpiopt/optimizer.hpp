#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "lpiopt/interpolation.hpp"
#include "lpiopt/problems.hpp"

namespace lpiopt {

enum class ScheduleMode { theory, practical };

std::string to_string(ScheduleMode mode);

struct Schedule {
  int T = 0;
  double delta = 0.0;  // per-iteration sup-norm budget; NaN when not specified in practical mode
  int m = 0;           // points per axis; 0 when the theory value does not fit
  double h = 0.0;
  int l = 0;
  std::string kernel = "boxcar";
  ScheduleMode mode = ScheduleMode::practical;

  // Theory-mode diagnostics, all in log-space.
  double log10_m = 0.0;
  double log_h = 0.0;
  bool infeasible = false;  // m^d over the grid cap or m unrepresentable
  bool practical_mode_required = false;

  nlohmann::json to_json() const;
};

/// User-chosen (T, m, h, l); delta is left unspecified.
Schedule practical_schedule(int T, int m, double h, int l, const std::string& kernel = "boxcar");

/// Scalars entering the theory schedule.
struct ScheduleInputs {
  double sigma = 2.0;
  double mu = 1.0;
  double gap = 1.0;  // F(theta0) - F_*
  double p = 1.0;
  double epsilon = 0.1;
  int d = 1;
  double eta = 2.0;
  TheoryConstants constants;
};

/// T = ceil(log((gap + p/(2 mu)) / eps) / log(sigma / (sigma - 1))), delta = (1 - 1/sigma)^{T/2}.
/// T is clamped to at least 1. Throws UnsupportedRegimeError when sigma <= 1.
int theory_iterations(double sigma, double mu, double gap, double p, double epsilon);

/// Full theory schedule; m and h are only filled in when l = ceil(eta) - 1 >= 1.
Schedule theory_schedule(const ScheduleInputs& in, std::uint64_t cap = grid_cap());

/// Same, with gap taken from the problem's closed-form minimizer or f_star_hint.
/// Throws ConfigError when neither is available.
Schedule theory_schedule(const LossProblem& problem, const Dataset& data, const Eigen::VectorXd& theta0,
                         double epsilon, const std::string& kernel = "boxcar", std::uint64_t cap = grid_cap());

struct IterationRecord {
  int t = 0;
  double F = 0.0;
  std::optional<double> grad_err;       // ||estimated - true gradient||_2, audited runs only
  std::optional<double> coord_sup_err;  // max_{i,k} |interpolated - true coordinate k at sample i|
  std::uint64_t oracle_count = 0;
};

struct RunReport {
  std::string optimizer;
  std::vector<IterationRecord> iterates;  // t = 0..T
  Eigen::VectorXd final_theta;
  bool converged = false;   // final F - F_* <= target epsilon (when both are known)
  bool partial = false;     // stopped by the runtime cap
  std::optional<double> f_star;
  nlohmann::json config;
  std::string note;

  /// First t with F - F_* <= eps, if any.
  std::optional<int> first_hit(double eps) const;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
  /// Columns t,F,grad_err,oracle_count; missing grad_err is an empty field.
  std::string to_csv() const;
};

/// Parses a series CSV back into (t, F, grad_err, oracle_count) records.
std::vector<IterationRecord> parse_series_csv(const std::string& text);

/// Precomputed per-sample interpolation weights, keyed by (m, d, l, h, kernel, sample).
class WeightCache {
 public:
  std::shared_ptr<const LocalFit> get(const InterpConfig& cfg, const UniformGrid& grid, std::span<const double> x);
  std::size_t size() const;
  std::uint64_t hits() const { return hits_; }

 private:
  using Key = std::tuple<int, int, int, std::uint64_t, std::string, std::vector<std::uint64_t>>;
  mutable std::mutex mutex_;
  std::map<Key, std::shared_ptr<const LocalFit>> entries_;
  std::uint64_t hits_ = 0;
};

struct RunOptions {
  bool audit = false;
  std::optional<double> f_star;
  std::optional<double> epsilon;       // target used for `converged`
  std::optional<double> max_runtime_s;  // stop early and flag the report as partial
  std::uint64_t grid_cap = 0;          // 0: use grid_cap()
  WeightCache* cache = nullptr;
};

/// LPI-GD with a constant grid. Every iteration queries the oracle at all m^d
/// grid points, interpolates each gradient coordinate at every sample with
/// weights computed once up front, averages, and steps by 1/L1.
/// Throws DomainError when a sample leaves [h, 1-h]^d, ResourceError when m^d
/// exceeds the cap and IllPosedFitError (naming the sample) on a singular fit.
RunReport lpi_gd_run(CountingOracle& oracle, const Dataset& data, const Schedule& schedule,
                     const Eigen::VectorXd& theta0, const RunOptions& opts = {});

/// Exact GD: n oracle calls per iteration, step 1/L1.
RunReport gd_run(CountingOracle& oracle, const Dataset& data, int T, const Eigen::VectorXd& theta0,
                 const RunOptions& opts = {});

/// SGD with step 1/(mu t), one uniformly drawn sample per iteration.
RunReport sgd_run(CountingOracle& oracle, const Dataset& data, int T, const Eigen::VectorXd& theta0,
                  std::uint64_t seed, bool with_replacement = true, const RunOptions& opts = {});

struct BoundTrace {
  std::vector<bool> holds;  // index T' = 0..T
  std::vector<double> lhs;  // F(theta^{T'}) - F_*
  std::vector<double> rhs;
  std::optional<int> first_violation;
};

/// Checks the unrolled inexact-GD inequality at every prefix T':
/// F(theta^{T'}) - F_* <= q^{T'} (F(theta^0) - F_*) + (1/(2 L1)) sum_{t <= T'} q^{T'-t} e_t^2,
/// q = 1 - 1/sigma, e_t the logged gradient error. Throws ConfigError without
/// F_* and InputError without audit data.
BoundTrace inexact_bound_trace(const RunReport& report, const LossProblem& problem, double slack = 1e-9);

struct BoundInputs {
  double mu = 1.0;
  double L1 = 2.0;
  double L2 = 1.0;
  double b = 1.0;
  double c = 1.0;
  double p = 1.0;
  int d = 1;
  double eta = 2.0;
  int l = 1;
  double epsilon = 0.1;
  double F_gap = 1.0;
  double n = 1.0;  // sample count for the GD expression
};

struct OracleBounds {
  double log_C = 0.0;    // natural log of C(d, l)
  double log_lpi = 0.0;  // natural log of the LPI-GD bound
  double log10_lpi = 0.0;
  double gd_bound = 0.0;  // n log(1/eps), Theta-constant 1
  double sgd_bound = 0.0;  // 1/eps
  double log10_gd = 0.0;
  double log10_sgd = 0.0;
  bool precondition_ok = true;  // 0 < eps <= (L1 - mu) p / (2 L1 mu)
  std::string warning;
};

/// C(d,l) ((p + 2 mu F_gap)/eps)^{d/(2 eta)} log((p + 2 mu F_gap)/(2 mu eps)) in log-space,
/// plus the GD and SGD orders. Throws UnsupportedRegimeError when sigma <= 1.
OracleBounds oracle_bound_eval(const BoundInputs& in);

/// Natural log of C_{mu,L1,L2,b,c}(d, l).
double log_complexity_constant(double mu, double L1, double L2, double b, double c, int d, int l);

}  // namespace lpiopt
