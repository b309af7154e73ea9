#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpiopt/errors.hpp"
#include "lpiopt/optimizer.hpp"

namespace lpiopt {

inline constexpr const char* kVersion = "0.1.0";

/// Process exit codes of the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitInvalidConfig = 2,
  kExitInfeasible = 3,
  kExitRuntimeCap = 4,
};

/// One diagnostic against a configuration document.
struct ConfigIssue {
  std::string pointer;  // JSON pointer of the offending field
  int line = 0;         // 1-based line in the source text, 0 if unknown
  std::string message;
};

/// Thrown by the config parsers; what() lists every issue as "source:line: pointer: message".
class ConfigInvalid : public ConfigError {
 public:
  ConfigInvalid(const std::string& source, std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// Line of every JSON pointer in a syntactically valid document.
std::map<std::string, int> json_pointer_lines(const std::string& text);

struct ProblemSpec {
  std::string name = "ridge";  // ridge | synthetic-holder
  double lambda = 0.5;         // ridge
  std::optional<double> eta;   // ridge: defaults to d + 1
  double theta_bound = 10.0;   // ridge
  int p = 1;                   // synthetic-holder
  double L2 = 1.0;             // synthetic-holder
  double mu = 1.0;             // synthetic-holder
  double L1 = 2.0;             // synthetic-holder
  double omega = 6.0;          // synthetic-holder
  std::optional<double> f_star_hint;
};

struct DatasetSpec {
  std::string source = "synthetic";  // synthetic | csv
  int d = 2;
  std::size_t n = 50;
  double h_prime = 0.05;
  std::optional<std::uint64_t> seed;
  std::string path;  // csv only, resolved against the config's directory
};

struct OptimizerSpec {
  std::string name;   // gd | sgd | lpi-gd
  std::string label;  // output file stem; defaults to name
  std::optional<int> T;
  int m = 0;
  double h = 0.0;
  std::optional<int> l;
  std::string kernel = "boxcar";
  bool audit = false;
  bool with_replacement = true;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  ProblemSpec problem;
  DatasetSpec dataset;
  std::vector<OptimizerSpec> optimizers;
  ScheduleMode mode = ScheduleMode::practical;
  double epsilon = 1e-3;
  std::optional<std::vector<double>> theta0;
  std::optional<std::uint64_t> max_grid;
  std::optional<double> max_runtime_s;
  bool record_wall_time = false;

  // Diagnostics context, not part of the canonical form.
  std::string source_name;
  std::map<std::string, int> lines;

  /// Normalized form with defaults filled in; output_dir excluded.
  nlohmann::json canonical() const;
  /// FNV-1a 64 of canonical().dump(), as 16 hex digits.
  std::string hash() const;
};

/// Parses and validates a config document. Relative paths resolve against base_dir.
/// Throws ConfigInvalid listing every problem found.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source_name,
                                         const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// splitmix64(seed ^ fnv1a(tag)).
std::uint64_t split_seed(std::uint64_t seed, const std::string& tag);
std::uint64_t fnv1a64(const std::string& bytes);

struct ComparisonRow {
  std::string optimizer;
  double epsilon_achieved = 0.0;  // final F - F_*
  std::uint64_t oracle_calls = 0;
  double wall_time_s = 0.0;
  std::optional<double> log10_bound;
  std::optional<int> iterations_to_target;
  std::optional<std::uint64_t> oracle_calls_to_target;
};

std::string comparison_csv(const std::vector<ComparisonRow>& rows, double target_epsilon);

struct ExperimentResult {
  int exit_code = kExitOk;
  std::string message;
  std::vector<RunReport> reports;
  std::vector<ComparisonRow> rows;
  std::vector<std::string> files;
  double f_star = 0.0;
};

/// Runs every optimizer in the config and writes, per optimizer, <label>_report.json
/// and <label>_series.csv, then comparison.csv and MANIFEST.json. Feasibility is
/// checked for all optimizers before anything runs or is written.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// CLI entry: load, validate, run. Diagnostics go to `err`.
int run_experiment_file(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err);

/// OLS slope of log y against log x. Needs >= 3 points, all positive.
double rate_fit(const std::vector<double>& xs, const std::vector<double>& ys);

struct ScalingRegime {
  double alpha = 1.0;
  double beta = 2.0;
  double tau = 4.0;
  double gamma = 8.0;
};

struct ScalingRow {
  double n = 0.0;
  double epsilon = 0.0;
  double p = 0.0;
  int d = 1;
  int d_formula = 0;  // floor(loglog n / (4 log(e (gamma + 1)))) before clamping to >= 1
  double eta = 0.0;
  int l = 0;
  double log10_lpi = 0.0;
  double log10_gd = 0.0;
  double log10_sgd = 0.0;
  bool precondition_ok = true;
};

struct ScalingTable {
  ScalingRegime regime;
  bool regime_ok = true;  // tau > max(1, 1/alpha) and gamma > max(1, tau (alpha + beta) / 2)
  std::vector<ScalingRow> rows;

  /// n,epsilon,p,d,d_formula,eta,l,log10_lpi,log10_gd,log10_sgd,log10_lpi_over_gd,log10_lpi_over_sgd,precondition_ok
  std::string to_csv() const;
};

/// Bounds with mu = 1, L1 = 2, L2 = 1, b = c = 1, F_gap = 1 and Theta-constants 1.
ScalingTable scaling_table(const ScalingRegime& regime, const std::vector<double>& ns);

struct InterpCheckConfig {
  int d = 1;
  double eta = 2.0;
  std::optional<int> l;
  std::string kernel = "boxcar";
  std::string function = "trig-ridge";  // trig-ridge | polynomial
  double L2 = 1.0;
  double omega = 6.0;
  int degree = 2;  // polynomial
  std::vector<int> m = {50, 100, 200, 400};
  double h_scale = 4.0;  // h = h_scale / m
  int probes = 200;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::string name = "interp_check";
};

InterpCheckConfig parse_interp_check_config(const std::string& text, const std::string& source_name,
                                            const std::filesystem::path& base_dir);

struct InterpCheckRow {
  int m = 0;
  double h = 0.0;
  double sup_error = 0.0;
  double max_condition = 0.0;
};

struct InterpCheckResult {
  std::vector<InterpCheckRow> rows;
  double slope = 0.0;
  int l = 0;
  std::vector<std::string> files;
};

/// sup_error of the interpolator against the target at fixed probe points, for each m.
InterpCheckResult run_interp_check(const InterpCheckConfig& cfg, bool write_files = true);

int run_interp_check_file(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err);

/// Writes text with LF line endings, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lpiopt
