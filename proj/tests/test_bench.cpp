#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lpiopt/bench.hpp"

using namespace lpiopt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lpiopt_bench_" + name);
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

const char* kGdOnly = R"({
  "name": "gd_only",
  "seed": 3,
  "problem": {"name": "ridge", "lambda": 0.5},
  "dataset": {"source": "synthetic", "d": 2, "n": 50},
  "optimizers": [{"name": "gd", "T": 10}]
})";

ExperimentConfig parse(const std::string& text, const fs::path& base = fs::temp_directory_path()) {
  return parse_experiment_config(text, "cfg.json", base);
}

std::vector<ConfigIssue> issues_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigInvalid& e) {
    return e.issues();
  }
  return {};
}

}  // namespace

TEST(RateFit, Examples) {
  const std::vector<double> xs{10, 20, 40, 80, 160};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(std::pow(x, -2.0));
  EXPECT_NEAR(rate_fit(xs, ys), -2.0, 1e-12);
  EXPECT_NEAR(rate_fit(xs, std::vector<double>(5, 7.0)), 0.0, 1e-15);

  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  std::vector<double> noisy;
  for (double x : xs) noisy.push_back(3.0 * std::pow(x, -4.0) * (1.0 + 0.01 * noise(rng)));
  const double s = rate_fit(xs, noisy);
  EXPECT_GE(s, -4.1);
  EXPECT_LE(s, -3.9);
}

TEST(RateFit, RejectsBadInput) {
  EXPECT_THROW(rate_fit({1, 2}, {1, 2}), InputError);
  EXPECT_THROW(rate_fit({1, 2, 3}, {1, 0, 2}), InputError);
  EXPECT_THROW(rate_fit({1, -2, 3}, {1, 1, 2}), InputError);
  EXPECT_THROW(rate_fit({1, 2, 3}, {1, 2}), InputError);
}

TEST(ScalingTable, ColumnsAndTrend) {
  const ScalingRegime regime{1.0, 2.0, 4.0, 8.0};
  const ScalingTable t = scaling_table(regime, {1e6, 1e9, 1e12});
  EXPECT_TRUE(t.regime_ok);
  ASSERT_EQ(t.rows.size(), 3u);
  for (size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    EXPECT_NEAR(r.log10_gd, std::log10(r.n * std::log(std::pow(r.n, regime.alpha))), 1e-12);
    EXPECT_NEAR(r.log10_sgd, regime.alpha * std::log10(r.n), 1e-12);
    EXPECT_GE(r.d, 1);
    if (i > 0) {
      EXPECT_LT(r.log10_lpi - r.log10_gd, t.rows[i - 1].log10_lpi - t.rows[i - 1].log10_gd);
      EXPECT_LT(r.log10_lpi - r.log10_sgd, t.rows[i - 1].log10_lpi - t.rows[i - 1].log10_sgd);
    }
  }
  const std::string csv = t.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "n,epsilon,p,d,d_formula,eta,l,log10_lpi,log10_gd,log10_sgd,log10_lpi_over_gd,log10_lpi_over_sgd,"
            "precondition_ok");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(ScalingTable, RegimeFlagAndDomain) {
  EXPECT_FALSE(scaling_table({1.0, 2.0, 0.5, 8.0}, {1e6}).regime_ok);
  EXPECT_FALSE(scaling_table({1.0, 2.0, 4.0, 2.0}, {1e6}).regime_ok);
  EXPECT_THROW(scaling_table({1.0, 2.0, 4.0, 8.0}, {2.0}), InputError);
}

TEST(Config, MinimalParsesWithDefaults) {
  const ExperimentConfig cfg = parse(kGdOnly, "/tmp/base");
  EXPECT_EQ(cfg.name, "gd_only");
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.output_dir, fs::path("/tmp/base/lpiopt_out"));
  EXPECT_EQ(cfg.dataset.h_prime, 0.05);
  EXPECT_EQ(cfg.mode, ScheduleMode::practical);
  ASSERT_EQ(cfg.optimizers.size(), 1u);
  EXPECT_EQ(cfg.optimizers[0].label, "gd");
  EXPECT_EQ(*cfg.optimizers[0].T, 10);
}

TEST(Config, DiagnosticsCarryLineAndPointer) {
  const std::string text = R"({
  "problem": {"name": "ridge", "lamda": 0.5},
  "dataset": {"source": "synthetic", "d": 2, "n": "fifty"},
  "optimizers": [
    {"name": "gd", "T": 10},
    {"name": "lpi-gd", "T": 5, "m": 40}
  ]
})";
  const auto issues = issues_of(text);
  auto find = [&](const std::string& ptr) -> const ConfigIssue* {
    for (const auto& i : issues)
      if (i.pointer == ptr) return &i;
    return nullptr;
  };
  ASSERT_NE(find("/problem/lamda"), nullptr);
  EXPECT_EQ(find("/problem/lamda")->line, 2);
  ASSERT_NE(find("/dataset/n"), nullptr);
  EXPECT_EQ(find("/dataset/n")->line, 3);
  ASSERT_NE(find("/optimizers/1/h"), nullptr);
  EXPECT_EQ(find("/optimizers/1/h")->line, 6);  // missing field: reported at its parent
  try {
    parse(text);
    FAIL();
  } catch (const ConfigInvalid& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.json:2: /problem/lamda: unknown key"), std::string::npos) << e.what();
  }
}

TEST(Config, MalformedJsonReportsLine) {
  const auto issues = issues_of("{\n  \"name\": \"x\",\n  \"seed\": ,\n}");
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].line, 3);
}

TEST(Config, SemanticChecks) {
  auto has = [](const std::vector<ConfigIssue>& is, const std::string& ptr) {
    return std::any_of(is.begin(), is.end(), [&](const ConfigIssue& i) { return i.pointer == ptr; });
  };
  EXPECT_TRUE(has(issues_of(R"({"problem": {"name": "ridge"}, "dataset": {}, "optimizers": [{"name": "gd", "T": 1}, {"name": "gd", "T": 2}]})"),
                  "/optimizers/1/name"));
  EXPECT_TRUE(has(issues_of(R"({"schedule_mode": "theory", "problem": {"name": "ridge"}, "dataset": {}, "optimizers": [{"name": "lpi-gd", "m": 4}]})"),
                  "/optimizers/0/m"));
  EXPECT_TRUE(has(issues_of(R"({"problem": {"name": "ridge"}, "dataset": {"d": 1}, "optimizers": [{"name": "gd", "T": 1}]})"),
                  "/dataset/d"));
  EXPECT_TRUE(has(issues_of(R"({"problem": {"name": "ridge"}, "dataset": {}, "optimizers": [{"name": "adam", "T": 1}]})"),
                  "/optimizers/0/name"));
  EXPECT_TRUE(has(issues_of(R"({"problem": {"name": "ridge"}, "dataset": {}, "optimizers": []})"), "/optimizers"));
  EXPECT_TRUE(has(issues_of(R"({"problem": {"name": "ridge"}, "dataset": {}, "optimizers": [{"name": "sgd"}]})"),
                  "/optimizers/0/T"));
  EXPECT_TRUE(has(issues_of(R"({"problem": {"name": "ridge"}, "dataset": {"h_prime": 0.7}, "optimizers": [{"name": "gd", "T": 1}]})"),
                  "/dataset/h_prime"));
  EXPECT_TRUE(has(issues_of(R"({"extra": 1, "problem": {"name": "ridge"}, "dataset": {}, "optimizers": [{"name": "gd", "T": 1}]})"),
                  "/extra"));
  EXPECT_TRUE(issues_of(kGdOnly).empty());
}

TEST(Config, HashTracksSemanticFieldsOnly) {
  const std::string base = parse(kGdOnly).hash();
  EXPECT_EQ(base.size(), 16u);
  // Formatting, key order and output_dir do not matter.
  const std::string reordered = R"({"optimizers": [{"T": 10, "name": "gd"}], "seed": 3, "name": "gd_only",
    "dataset": {"n": 50, "d": 2, "source": "synthetic"}, "output_dir": "elsewhere",
    "problem": {"lambda": 0.5, "name": "ridge"}})";
  EXPECT_EQ(parse(reordered).hash(), base);
  // Spelling out a default changes nothing.
  std::string explicit_default = kGdOnly;
  explicit_default.replace(explicit_default.find("\"n\": 50"), 7, "\"n\": 50, \"h_prime\": 0.05");
  EXPECT_EQ(parse(explicit_default).hash(), base);
  // Any semantic change does.
  for (auto [from, to] : std::vector<std::pair<std::string, std::string>>{{"\"T\": 10", "\"T\": 11"},
                                                                          {"\"seed\": 3", "\"seed\": 4"},
                                                                          {"\"lambda\": 0.5", "\"lambda\": 0.25"},
                                                                          {"\"n\": 50", "\"n\": 51"}}) {
    std::string t = kGdOnly;
    t.replace(t.find(from), from.size(), to);
    EXPECT_NE(parse(t).hash(), base) << to;
  }
}

TEST(Seeds, SplitIsDeterministicAndTagged) {
  EXPECT_EQ(split_seed(7, "dataset"), split_seed(7, "dataset"));
  EXPECT_NE(split_seed(7, "dataset"), split_seed(7, "problem"));
  EXPECT_NE(split_seed(7, "dataset"), split_seed(8, "dataset"));
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(RunExperiment, GdOnlyWritesFourFilesDeterministically) {
  const fs::path dir = scratch("gd_only");
  ExperimentConfig cfg = parse(kGdOnly, dir);
  const ExperimentResult a = run_experiment(cfg);
  EXPECT_EQ(a.exit_code, kExitOk);
  EXPECT_EQ(a.files, (std::vector<std::string>{"MANIFEST.json", "comparison.csv", "gd_report.json", "gd_series.csv"}));
  std::vector<std::string> first;
  for (const auto& f : a.files) first.push_back(slurp(cfg.output_dir / f));
  const ExperimentResult b = run_experiment(cfg);
  for (size_t i = 0; i < a.files.size(); ++i) EXPECT_EQ(slurp(cfg.output_dir / a.files[i]), first[i]) << a.files[i];

  const json manifest = json::parse(first[0]);
  EXPECT_EQ(manifest.at("config_hash"), cfg.hash());
  EXPECT_EQ(manifest.at("exit_code"), 0);
  EXPECT_FALSE(manifest.at("partial").get<bool>());
  for (const auto& f : a.files) EXPECT_EQ(slurp(cfg.output_dir / f).find('\r'), std::string::npos);
  fs::remove_all(dir);
}

TEST(RunExperiment, AllOptimizersAndRoundTrip) {
  const fs::path dir = scratch("all");
  const std::string text = R"({
    "name": "all", "seed": 11, "epsilon": 1e-3,
    "problem": {"name": "ridge"},
    "dataset": {"source": "synthetic", "d": 2, "n": 60, "h_prime": 0.1},
    "optimizers": [
      {"name": "gd", "T": 40},
      {"name": "sgd", "T": 500},
      {"name": "sgd", "label": "sgd_epochs", "T": 500, "with_replacement": false},
      {"name": "lpi-gd", "T": 40, "m": 30, "h": 0.1, "l": 2, "audit": true}
    ]})";
  const ExperimentConfig cfg = parse(text, dir);
  const ExperimentResult res = run_experiment(cfg);
  ASSERT_EQ(res.exit_code, kExitOk);
  ASSERT_EQ(res.rows.size(), 4u);
  EXPECT_EQ(res.rows[0].oracle_calls, 40u * 60u);
  EXPECT_EQ(res.rows[1].oracle_calls, 500u);
  EXPECT_EQ(res.rows[3].oracle_calls, 40u * 900u);
  for (size_t i = 0; i < res.rows.size(); ++i) {
    EXPECT_EQ(res.rows[i].oracle_calls, res.reports[i].iterates.back().oracle_count);
    EXPECT_EQ(res.rows[i].wall_time_s, 0.0);
    ASSERT_TRUE(res.rows[i].log10_bound.has_value()) << res.rows[i].optimizer;
  }
  // Every CSV re-parses to its JSON report.
  for (const auto& rep : res.reports) {
    const std::string label = rep.config.at("label");
    const RunReport from_json = RunReport::from_json(json::parse(slurp(dir / "lpiopt_out" / (label + "_report.json"))));
    const auto rows = parse_series_csv(slurp(dir / "lpiopt_out" / (label + "_series.csv")));
    ASSERT_EQ(rows.size(), from_json.iterates.size());
    for (size_t t = 0; t < rows.size(); ++t) {
      EXPECT_EQ(rows[t].F, from_json.iterates[t].F);
      EXPECT_EQ(rows[t].grad_err, from_json.iterates[t].grad_err);
      EXPECT_EQ(rows[t].oracle_count, from_json.iterates[t].oracle_count);
    }
  }
  // Different SGD labels draw different seeds.
  EXPECT_NE(res.reports[1].to_csv(), res.reports[2].to_csv());
  fs::remove_all(dir);
}

TEST(RunExperiment, InfeasibleGridExitsThreeWithoutOutputs) {
  const fs::path dir = scratch("infeasible");
  const std::string text = R"({
    "problem": {"name": "ridge"},
    "dataset": {"source": "synthetic", "d": 3, "n": 20},
    "optimizers": [{"name": "gd", "T": 5}, {"name": "lpi-gd", "T": 5, "m": 1000000, "h": 0.01}]})";
  const ExperimentResult res = run_experiment(parse(text, dir));
  EXPECT_EQ(res.exit_code, kExitInfeasible);
  EXPECT_FALSE(fs::exists(dir / "lpiopt_out"));
  EXPECT_NE(res.message.find("1000000^3"), std::string::npos) << res.message;

  const std::string theory = R"({
    "schedule_mode": "theory",
    "problem": {"name": "ridge"},
    "dataset": {"source": "synthetic", "d": 2, "n": 20},
    "optimizers": [{"name": "lpi-gd"}]})";
  EXPECT_EQ(run_experiment(parse(theory, dir)).exit_code, kExitInfeasible);
  EXPECT_FALSE(fs::exists(dir / "lpiopt_out"));
  fs::remove_all(dir);
}

TEST(RunExperiment, GridCapFromConfigAndEnvironment) {
  const fs::path dir = scratch("cap");
  const std::string text = R"({
    "problem": {"name": "ridge"},
    "dataset": {"source": "synthetic", "d": 2, "n": 20, "h_prime": 0.1},
    "caps": {"max_grid": 100},
    "optimizers": [{"name": "lpi-gd", "T": 2, "m": 20, "h": 0.1}]})";
  EXPECT_EQ(run_experiment(parse(text, dir)).exit_code, kExitInfeasible);
  struct EnvGuard {
    EnvGuard() { ::setenv("LPIOPT_CAP_GRID", "1000", 1); }
    ~EnvGuard() { ::unsetenv("LPIOPT_CAP_GRID"); }
  } guard;
  EXPECT_EQ(run_experiment(parse(text, dir)).exit_code, kExitOk);
  fs::remove_all(dir);
}

TEST(RunExperiment, RuntimeCapExitsFourWithPartialFlag) {
  const fs::path dir = scratch("runtime");
  const std::string text = R"({
    "problem": {"name": "ridge"},
    "dataset": {"source": "synthetic", "d": 2, "n": 50, "h_prime": 0.1},
    "caps": {"max_runtime_s": 1e-9},
    "optimizers": [{"name": "lpi-gd", "T": 100000, "m": 40, "h": 0.1}, {"name": "gd", "T": 5}]})";
  const ExperimentResult res = run_experiment(parse(text, dir));
  EXPECT_EQ(res.exit_code, kExitRuntimeCap);
  const json manifest = json::parse(slurp(dir / "lpiopt_out" / "MANIFEST.json"));
  EXPECT_TRUE(manifest.at("partial").get<bool>());
  EXPECT_EQ(manifest.at("exit_code"), 4);
  EXPECT_EQ(manifest.at("skipped"), json::array({"gd"}));
  const json rep = json::parse(slurp(dir / "lpiopt_out" / "lpi-gd_report.json"));
  EXPECT_TRUE(rep.at("partial").get<bool>());
  fs::remove_all(dir);
}

TEST(RunExperiment, BandwidthViolationIsFieldError) {
  const fs::path dir = scratch("bandwidth");
  const std::string text = R"({
    "problem": {"name": "ridge"},
    "dataset": {"source": "synthetic", "d": 2, "n": 20, "h_prime": 0.05},
    "optimizers": [{"name": "lpi-gd", "T": 2, "m": 40, "h": 0.1}]})";
  try {
    run_experiment(parse(text, dir));
    FAIL();
  } catch (const ConfigInvalid& e) {
    ASSERT_EQ(e.issues().size(), 1u);
    EXPECT_EQ(e.issues()[0].pointer, "/optimizers/0/h");
    EXPECT_EQ(e.issues()[0].line, 4);
  }
  EXPECT_FALSE(fs::exists(dir / "lpiopt_out"));
  fs::remove_all(dir);
}

TEST(RunExperiment, CsvDatasetResolvesRelativeToConfig) {
  const fs::path dir = scratch("csv");
  {
    std::ofstream out(dir / "data.csv");
    out << "x,y\n";
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 30; ++i) {
      const double x = u(rng);
      out << x << "," << 0.5 * x + 0.1 * u(rng) << "\n";
    }
  }
  std::ofstream(dir / "exp.json") << R"({
    "output_dir": "out",
    "problem": {"name": "ridge", "lambda": 0.1},
    "dataset": {"source": "csv", "path": "data.csv", "h_prime": 0.1},
    "optimizers": [{"name": "gd", "T": 20}, {"name": "lpi-gd", "T": 20, "m": 30, "h": 0.1}]})";
  std::ostringstream out, err;
  EXPECT_EQ(run_experiment_file(dir / "exp.json", out, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir / "out" / "MANIFEST.json"));
  const json manifest = json::parse(slurp(dir / "out" / "MANIFEST.json"));
  EXPECT_EQ(manifest.at("dataset_provenance").at("h_prime"), 0.1);
  fs::remove_all(dir);
}

TEST(RunExperiment, FileEntryMapsErrorsToExitTwo) {
  const fs::path dir = scratch("file_errors");
  std::ostringstream out, err;
  EXPECT_EQ(run_experiment_file(dir / "missing.json", out, err), kExitInvalidConfig);
  std::ofstream(dir / "bad.json") << "{\n  \"problem\": {\"name\": \"lasso\"},\n  \"dataset\": {},\n  \"optimizers\": [{\"name\": \"gd\", \"T\": 1}]\n}";
  std::ostringstream err2;
  EXPECT_EQ(run_experiment_file(dir / "bad.json", out, err2), kExitInvalidConfig);
  EXPECT_NE(err2.str().find("bad.json:2: /problem/name"), std::string::npos) << err2.str();
  fs::remove_all(dir);
}

TEST(ComparisonCsv, Format) {
  ComparisonRow a{"gd", 1e-4, 500, 0.0, 2.5, 3, 150};
  ComparisonRow b{"lpi-gd", 2e-3, 1600, 0.0, std::nullopt, std::nullopt, std::nullopt};
  const std::string csv = comparison_csv({a, b}, 1e-3);
  std::istringstream in(csv);
  std::string header, l1, l2;
  std::getline(in, header);
  std::getline(in, l1);
  std::getline(in, l2);
  EXPECT_EQ(header,
            "optimizer,epsilon_achieved,oracle_calls,wall_time_s,log10_bound,target_epsilon,iterations_to_target,"
            "oracle_calls_to_target");
  EXPECT_EQ(l1, "gd,0.0001,500,0,2.5,0.001,3,150");
  EXPECT_EQ(l2, "lpi-gd,0.002,1600,0,,0.001,,");
}

TEST(InterpCheck, PolynomialIsReproducedAndTrigDecays) {
  const fs::path dir = scratch("interp");
  const InterpCheckConfig poly = parse_interp_check_config(
      R"({"function": "polynomial", "degree": 2, "eta": 3, "m": [20, 40, 80], "probes": 30})", "ic.json", dir);
  const InterpCheckResult pr = run_interp_check(poly, false);
  for (const auto& row : pr.rows) EXPECT_LE(row.sup_error, 1e-8 * row.max_condition);

  const InterpCheckConfig trig = parse_interp_check_config(R"({"eta": 2, "probes": 50, "name": "rate"})", "ic.json", dir);
  const InterpCheckResult tr = run_interp_check(trig, true);
  EXPECT_LE(tr.slope, -2.0 + 0.5);
  EXPECT_TRUE(fs::exists(dir / "lpiopt_out" / "rate.csv"));
  const json summary = json::parse(slurp(dir / "lpiopt_out" / "rate.json"));
  EXPECT_EQ(summary.at("reference_slope"), -2.0);
  EXPECT_EQ(summary.at("rows").size(), 4u);

  EXPECT_THROW(parse_interp_check_config(R"({"m": [4], "h_scale": 4})", "ic.json", dir), ConfigInvalid);
  EXPECT_THROW(parse_interp_check_config(R"({"bogus": 1})", "ic.json", dir), ConfigInvalid);
  fs::remove_all(dir);
}
