// lpiopt command-line front end.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "lpiopt/bench.hpp"
#include "lpiopt/errors.hpp"
#include "lpiopt/spectra.hpp"

namespace {

int spectra_check_cmd(int d, int l) {
  using nlohmann::json;
  if (d < 1 || l < 0) {
    std::cerr << "spectra-check: need --d >= 1 and --l >= 0\n";
    return lpiopt::kExitInvalidConfig;
  }
  try {
    const lpiopt::SpectraSummary s = lpiopt::spectra_check(d, l);
    const lpiopt::DetIdentityReport det = lpiopt::det_identity_check(d, l);
    json out = {{"d", s.d},
                {"l", s.l},
                {"D", s.D},
                {"lambda_min", s.lambda_min},
                {"log_lambda", s.log_lambda ? json(*s.log_lambda) : json(nullptr)},
                {"det_gap", s.det_gap},
                {"log_det_direct", det.log_det_direct},
                {"log_det_cholesky", det.log_det_cholesky},
                {"trace", s.trace},
                {"trace_bound", s.trace_bound}};
    if (det.det_exact) out["det_exact_match"] = det.exact_match;
    if (s.log_lambda) out["theorem_regime"] = lpiopt::lambda_log(d, l).theorem_regime;
    std::cout << out.dump(2) << "\n";
    return lpiopt::kExitOk;
  } catch (const lpiopt::ResourceError& e) {
    std::cerr << e.what() << "\n";
    return lpiopt::kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "spectra-check: " << e.what() << "\n";
    return lpiopt::kExitInvalidConfig;
  }
}

int scaling_table_cmd(const lpiopt::ScalingRegime& regime, const std::string& ns_text, const std::string& out_path) {
  std::vector<double> ns;
  std::stringstream ss(ns_text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      ns.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      std::cerr << "scaling-table: --n: cannot parse '" << tok << "'\n";
      return lpiopt::kExitInvalidConfig;
    }
  }
  if (ns.empty()) {
    std::cerr << "scaling-table: --n needs at least one value\n";
    return lpiopt::kExitInvalidConfig;
  }
  try {
    const lpiopt::ScalingTable table = lpiopt::scaling_table(regime, ns);
    if (!table.regime_ok) {
      std::cerr << "warning: regime outside tau > max(1, 1/alpha), gamma > max(1, tau (alpha + beta) / 2)\n";
    }
    for (const auto& row : table.rows) {
      if (row.d_formula < 1) {
        std::cerr << fmt::format("note: n = {:.6g}: d formula gives {}, clamped to 1\n", row.n, row.d_formula);
      }
    }
    if (out_path.empty()) {
      std::cout << table.to_csv();
    } else {
      lpiopt::write_text_file(out_path, table.to_csv());
    }
    return lpiopt::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "scaling-table: " << e.what() << "\n";
    return lpiopt::kExitInvalidConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local polynomial interpolation gradient descent toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", lpiopt::kVersion);

  std::string optimize_cfg;
  auto* optimize = app.add_subcommand("optimize", "Run the optimizers listed in an experiment config");
  optimize->add_option("config", optimize_cfg, "Experiment config (JSON)")->required();

  std::string interp_cfg;
  auto* interp = app.add_subcommand("interp-check", "Measure interpolation error against grid size");
  interp->add_option("config", interp_cfg, "Interpolation check config (JSON)")->required();

  int spec_d = 0;
  int spec_l = 0;
  auto* spectra = app.add_subcommand("spectra-check", "Spectral and determinant checks of the integral matrix");
  spectra->add_option("--d", spec_d, "Data dimension")->required();
  spectra->add_option("--l", spec_l, "Polynomial order")->required();

  lpiopt::ScalingRegime regime;
  std::string ns_text;
  std::string table_out;
  auto* scaling = app.add_subcommand("scaling-table", "log10 oracle bounds of LPI-GD, GD and SGD across n");
  scaling->add_option("--alpha", regime.alpha, "epsilon = n^-alpha")->required();
  scaling->add_option("--beta", regime.beta, "p = n^beta")->required();
  scaling->add_option("--tau", regime.tau, "eta = tau (alpha + beta) d / 2")->required();
  scaling->add_option("--gamma", regime.gamma, "d = floor(loglog n / (4 log(e (gamma + 1))))")->required();
  scaling->add_option("--n", ns_text, "Comma-separated sample counts")->required();
  scaling->add_option("--out", table_out, "Write the CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return lpiopt::kExitInvalidConfig;
  }

  if (*optimize) return lpiopt::run_experiment_file(optimize_cfg, std::cout, std::cerr);
  if (*interp) return lpiopt::run_interp_check_file(interp_cfg, std::cout, std::cerr);
  if (*spectra) return spectra_check_cmd(spec_d, spec_l);
  return scaling_table_cmd(regime, ns_text, table_out);
}
