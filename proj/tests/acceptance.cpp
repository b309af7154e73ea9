// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "lpiopt/bench.hpp"
#include "lpiopt/interpolation.hpp"
#include "lpiopt/optimizer.hpp"
#include "lpiopt/spectra.hpp"
#include "oracles.hpp"

using namespace lpiopt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lpiopt_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome exact_spectral_identities() {
  double worst = 0.0;
  for (int d = 1; d <= 2; ++d) {
    for (int l = 0; l <= 4; ++l) {
      const DetIdentityReport r = det_identity_check(d, l);
      if (r.D > 30 || !r.det_exact || !r.det_cholesky_exact) return {false, fmt::format("no exact det at ({},{})", d, l)};
      if (!r.exact_match || *r.det_exact != *r.det_cholesky_exact)
        return {false, fmt::format("exact mismatch at ({},{})", d, l)};
      worst = std::max(worst, r.relative_gap);
    }
  }
  return {worst <= 1e-10, fmt::format("max float gap {:.3g}", worst)};
}

Outcome script_b_vs_quadrature() {
  double worst = 0.0;
  for (int d = 1; d <= 2; ++d) {
    for (int l = 0; l <= 3; ++l) {
      const Eigen::MatrixXd b = script_b_matrix(d, l).to_double();
      const BasisLayout layout(d, l);
      for (int i = 0; i < layout.size(); ++i) {
        for (int j = 0; j < layout.size(); ++j) {
          const double q = oracle::cube_integral(d, [&](const std::vector<double>& u) {
            return oracle::naive_u_entry(layout[i].entries(), u) * oracle::naive_u_entry(layout[j].entries(), u);
          });
          worst = std::max(worst, std::abs(b(i, j) - q));
        }
      }
    }
  }
  return {worst <= 1e-8, fmt::format("max entry error {:.3g}", worst)};
}

Outcome polynomial_reproduction() {
  std::mt19937_64 rng(20240301);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  const double h = 0.1;
  std::uniform_real_distribution<double> pos(h, 1.0 - h);
  double worst_ratio = 0.0;
  int polys = 0;
  for (int d = 1; d <= 2; ++d) {
    const UniformGrid grid = uniform_grid(60, d);
    for (int l = 0; l <= 3; ++l) {
      InterpConfig cfg{60, h, l};
      const BasisLayout layout(d, l);
      for (int k = 0; k < 25; ++k, ++polys) {
        std::vector<double> c(static_cast<size_t>(layout.size()));
        for (auto& v : c) v = coef(rng);
        auto poly = [&](std::span<const double> y) {
          double s = 0.0;
          for (int i = 0; i < layout.size(); ++i) {
            double term = c[static_cast<size_t>(i)];
            for (int j = 0; j < d; ++j) term *= std::pow(y[static_cast<size_t>(j)], layout[i][j]);
            s += term;
          }
          return s;
        };
        for (int q = 0; q < 20; ++q) {
          std::vector<double> x(static_cast<size_t>(d));
          for (auto& v : x) v = pos(rng);
          const LocalFit fit = local_fit(cfg, grid, x);
          const double err = std::abs(interpolate(fit, std::function<double(std::span<const double>)>(poly)) - poly(x));
          worst_ratio = std::max(worst_ratio, err / (1e-8 * fit.condition));
        }
      }
    }
  }
  return {polys == 200 && worst_ratio <= 1.0,
          fmt::format("{} polynomials, max error / (1e-8 cond) = {:.3g}", polys, worst_ratio)};
}

Outcome weight_identities() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> dim(1, 2), order(0, 3), grid_m(30, 120);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_ratio = 0.0;
  int fits = 0;
  while (fits < 500) {
    const int d = dim(rng);
    const int l = order(rng);
    const int m = grid_m(rng);
    // Window wide enough for a well-posed fit, below the half-width limit.
    const double h = std::min(0.45, (l + 2 + 6.0 * unit(rng)) / m);
    const UniformGrid grid = uniform_grid(m, d);
    std::vector<double> x(static_cast<size_t>(d));
    for (auto& v : x) v = h + (1.0 - 2.0 * h) * unit(rng);
    const LocalFit fit = local_fit(InterpConfig{m, h, l}, grid, x);
    const double tol = 1e-9 * fit.condition;
    worst_ratio = std::max(worst_ratio, std::abs(fit.weight_sum() - 1.0) / tol);
    const BasisLayout layout(d, l);
    for (const auto& s : layout.indices()) {
      if (s.order() == 0) continue;
      worst_ratio = std::max(worst_ratio, std::abs(weight_moment(fit, s)) / tol);
    }
    ++fits;
  }
  return {worst_ratio <= 1.0, fmt::format("{} fits, max deviation / (1e-9 cond) = {:.3g}", fits, worst_ratio)};
}

Outcome frobenius_perturbation() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int violations = 0;
  int checks = 0;
  double worst_ratio = 0.0;
  for (int d = 1; d <= 2; ++d) {
    for (int l = 0; l <= 3; ++l) {
      const Eigen::MatrixXd sb = script_b_matrix(d, l).to_double();
      for (int m : {40, 80, 160}) {
        const double h = 8.0 / m;
        const UniformGrid grid = uniform_grid(m, d);
        const double bound = 2.0 * l * std::pow(3.0 * std::exp(1.0), d) / (m * h);
        for (int k = 0; k < 50; ++k) {
          std::vector<double> x(static_cast<size_t>(d));
          for (auto& v : x) v = h + (1.0 - 2.0 * h) * unit(rng);
          const double fro = (b_matrix(InterpConfig{m, h, l}, grid, x) - sb).norm();
          ++checks;
          if (fro > bound) ++violations;
          if (bound > 0) worst_ratio = std::max(worst_ratio, fro / bound);
        }
      }
    }
  }
  return {violations == 0,
          fmt::format("{} violations in {} checks, max ||B(x) - B||_F / bound = {:.3g}", violations, checks, worst_ratio)};
}

Outcome interpolation_rate() {
  std::string detail;
  bool ok = true;
  for (double eta : {2.0, 4.0}) {
    InterpCheckConfig cfg;
    cfg.d = 1;
    cfg.eta = eta;
    cfg.m = {50, 100, 200, 400};
    const InterpCheckResult r = run_interp_check(cfg, false);
    ok = ok && r.slope <= -eta + 0.5;
    detail += fmt::format("{}eta={} slope {:.4f}", detail.empty() ? "" : ", ", eta, r.slope);
  }
  return {ok, detail};
}

struct RidgeRun {
  std::shared_ptr<const LossProblem> problem = std::make_shared<const LossProblem>(ridge_problem(0.5, 2));
  Dataset data = synthetic_ridge_dataset(2, 50, 0.1, 2024);
  FStar fs = f_star(*problem, data);
};

Outcome inexact_gd_bound() {
  RidgeRun r;
  CountingOracle o(r.problem);
  RunOptions opts;
  opts.audit = true;
  opts.f_star = r.fs.value;
  const RunReport rep = lpi_gd_run(o, r.data, practical_schedule(60, 40, 0.1, 2), Eigen::VectorXd::Zero(1), opts);
  const BoundTrace bt = inexact_bound_trace(rep, *r.problem, 1e-9);
  const double sqrt_p = std::sqrt(static_cast<double>(r.problem->p));
  int p_violations = 0;
  for (size_t t = 0; t < rep.iterates.size(); ++t) {
    const auto& it = rep.iterates[t];
    if (!it.grad_err || !it.coord_sup_err) continue;
    if (*it.grad_err > sqrt_p * *it.coord_sup_err * (1.0 + 1e-12) + 1e-15) ++p_violations;
  }
  int audited = 0;
  for (const auto& it : rep.iterates) audited += it.grad_err.has_value() ? 1 : 0;
  const double gap = rep.iterates.back().F - r.fs.value;
  const bool ok = !bt.first_violation && p_violations == 0 && audited >= 60 && gap <= 1e-3;
  return {ok, fmt::format("unrolled bound {} at {} prefixes, sqrt(p) bound violations {}, final gap {:.3g}",
                          bt.first_violation ? "violated" : "holds", bt.holds.size(), p_violations, gap)};
}

Outcome oracle_crossover() {
  const fs::path dir = scratch("crossover");
  std::vector<std::uint64_t> lpi_calls, gd_calls;
  std::string detail;
  bool ok = true;
  for (int n : {1000, 10000, 100000}) {
    const std::string text = fmt::format(R"({{
      "name": "crossover_{0}", "seed": 2024, "epsilon": 1e-3,
      "problem": {{"name": "ridge", "lambda": 0.5}},
      "dataset": {{"source": "synthetic", "d": 2, "n": {0}, "h_prime": 0.1}},
      "optimizers": [
        {{"name": "gd", "T": 60}},
        {{"name": "lpi-gd", "T": 60, "m": 40, "h": 0.1, "l": 2}}
      ]}})",
                                         n);
    const ExperimentResult res = run_experiment(parse_experiment_config(text, "crossover.json", dir));
    if (res.exit_code != kExitOk || res.rows.size() != 2) return {false, "run failed: " + res.message};
    const ComparisonRow& gd = res.rows[0];
    const ComparisonRow& lpi = res.rows[1];
    gd_calls.push_back(gd.oracle_calls);
    lpi_calls.push_back(lpi.oracle_calls);
    ok = ok && gd.oracle_calls == 60ull * static_cast<std::uint64_t>(n) && lpi.oracle_calls == 60ull * 1600ull;
    if (!gd.oracle_calls_to_target || !lpi.oracle_calls_to_target) {
      ok = false;
      detail += fmt::format(" n={}: target 1e-3 not reached;", n);
      continue;
    }
    if (n >= 10000) ok = ok && *lpi.oracle_calls_to_target < *gd.oracle_calls_to_target;
    detail += fmt::format(" n={}: LPI {} vs GD {} calls to 1e-3;", n, *lpi.oracle_calls_to_target,
                          *gd.oracle_calls_to_target);
  }
  ok = ok && lpi_calls[0] == lpi_calls[1] && lpi_calls[1] == lpi_calls[2];
  ok = ok && gd_calls[1] == 10 * gd_calls[0] && gd_calls[2] == 10 * gd_calls[1];
  fs::remove_all(dir);
  if (!detail.empty()) detail.pop_back();
  return {ok, detail.substr(1)};
}

Outcome schedule_formulas() {
  ScheduleInputs in;
  in.sigma = 2.0;
  in.mu = 1.0;
  in.gap = 1.0;
  in.p = 2.0;
  in.epsilon = 0.1;
  in.d = 1;
  in.eta = 3.0;
  const Schedule s = theory_schedule(in);
  const int T_formula = static_cast<int>(std::ceil(std::log((1.0 + 2.0 / 2.0) / 0.1) / std::log(2.0)));
  bool ok = s.T == 5 && s.T == T_formula && s.delta == std::pow(0.5, s.T / 2.0) && std::abs(s.delta - 0.176777) < 1e-6;

  const double lam = lambda_log(1, 2).log_value;
  const double lam_hp = static_cast<double>(log(oracle::lambda_hp(1, 2)));
  const double rel_lam = std::abs(lam - lam_hp) / std::abs(lam_hp);

  BoundInputs b;
  b.d = 1;
  b.l = 2;
  b.eta = 3.0;
  b.p = 2.0;
  b.epsilon = 0.1;
  const double got = oracle_bound_eval(b).log_lpi;
  const double want =
      static_cast<double>(oracle::log_lpi_bound_hp(b.mu, b.L1, b.L2, b.b, b.c, b.p, 1, 3.0, 2, b.epsilon, b.F_gap));
  const double rel_bound = std::abs(got - want) / std::abs(want);
  ok = ok && rel_lam <= 1e-10 && rel_bound <= 1e-10;
  return {ok, fmt::format("T={} delta={:.6f}; log Lambda rel err {:.2g}; log bound rel err {:.2g}", s.T, s.delta, rel_lam,
                          rel_bound)};
}

Outcome determinism() {
  const fs::path a = scratch("determinism_a");
  const fs::path b = scratch("determinism_b");
  const std::string text = R"({
    "name": "determinism", "seed": 99, "record_wall_time": false,
    "problem": {"name": "synthetic-holder", "eta": 3.0, "p": 2, "L2": 1.0},
    "dataset": {"source": "synthetic", "d": 2, "n": 200, "h_prime": 0.1},
    "optimizers": [
      {"name": "gd", "T": 20},
      {"name": "sgd", "T": 400},
      {"name": "sgd", "label": "sgd_wor", "T": 400, "with_replacement": false},
      {"name": "lpi-gd", "T": 20, "m": 30, "h": 0.1, "audit": true}
    ]})";
  const ExperimentResult ra = run_experiment(parse_experiment_config(text, "det.json", a));
  const ExperimentResult rb = run_experiment(parse_experiment_config(text, "det.json", b));
  const std::string ic = R"({"eta": 2, "m": [50, 100], "probes": 50, "seed": 4})";
  const InterpCheckResult ia = run_interp_check(parse_interp_check_config(ic, "ic.json", a), true);
  const InterpCheckResult ib = run_interp_check(parse_interp_check_config(ic, "ic.json", b), true);
  if (ra.exit_code != 0 || rb.exit_code != 0) return {false, "experiment failed"};
  int compared = 0;
  std::string mismatch;
  std::vector<std::string> files = ra.files;
  files.insert(files.end(), ia.files.begin(), ia.files.end());
  for (const auto& f : files) {
    const std::string fa = slurp(a / "lpiopt_out" / f);
    const std::string fb = slurp(b / "lpiopt_out" / f);
    ++compared;
    if (fa.empty() || fa != fb) mismatch += " " + f;
  }
  const bool ok = mismatch.empty() && ra.files == rb.files && ia.files == ib.files;
  fs::remove_all(a);
  fs::remove_all(b);
  return {ok, ok ? fmt::format("{} files byte-identical", compared) : "differs:" + mismatch};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "exact spectral identities", 10, exact_spectral_identities},
      {2, "integral matrix vs quadrature", 30, script_b_vs_quadrature},
      {3, "polynomial reproduction", 60, polynomial_reproduction},
      {4, "weight identities", 30, weight_identities},
      {5, "Frobenius perturbation", 60, frobenius_perturbation},
      {6, "interpolation rate", 60, interpolation_rate},
      {7, "inexact gradient descent bound", 120, inexact_gd_bound},
      {8, "oracle accounting and crossover", 600, oracle_crossover},
      {9, "schedule formulas", 5, schedule_formulas},
      {10, "determinism", 60, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.ok && in_time;
    failures += pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s [%.2f s of %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.limit_s, in_time ? "" : ", over time");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
