#include "lpiopt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <fmt/format.h>

#include "lpiopt/spectra.hpp"

namespace lpiopt {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Diagnostics

namespace {

std::string format_issues(const std::string& source, const std::vector<ConfigIssue>& issues) {
  std::string out;
  for (const auto& is : issues) {
    if (!out.empty()) out += '\n';
    out += fmt::format("{}:{}: {}: {}", source, is.line, is.pointer.empty() ? "/" : is.pointer, is.message);
  }
  return out;
}

std::string escape_pointer_token(const std::string& key) {
  std::string out;
  for (char ch : key) {
    if (ch == '~')
      out += "~0";
    else if (ch == '/')
      out += "~1";
    else
      out += ch;
  }
  return out;
}

class LineScanner {
 public:
  explicit LineScanner(const std::string& text) : text_(text) {}

  std::map<std::string, int> run() {
    skip_ws();
    value("");
    return std::move(lines_);
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  std::string string_token() {
    std::string out;
    ++pos_;  // opening quote
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
        ++pos_;
        const char esc = text_[pos_];
        out += esc == 'n' ? '\n' : esc == 't' ? '\t' : esc;
      } else {
        out += text_[pos_];
      }
      ++pos_;
    }
    ++pos_;  // closing quote
    return out;
  }

  void value(const std::string& ptr) {
    if (pos_ >= text_.size()) return;
    lines_.emplace(ptr, line_);
    const char ch = text_[pos_];
    if (ch == '{') {
      ++pos_;
      skip_ws();
      while (pos_ < text_.size() && text_[pos_] != '}') {
        const std::string key = string_token();
        skip_ws();
        ++pos_;  // ':'
        skip_ws();
        value(ptr + "/" + escape_pointer_token(key));
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          skip_ws();
        }
      }
      ++pos_;
    } else if (ch == '[') {
      ++pos_;
      skip_ws();
      int index = 0;
      while (pos_ < text_.size() && text_[pos_] != ']') {
        value(ptr + "/" + std::to_string(index++));
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          skip_ws();
        }
      }
      ++pos_;
    } else if (ch == '"') {
      string_token();
    } else {
      while (pos_ < text_.size() && std::string_view(",]} \t\r\n").find(text_[pos_]) == std::string_view::npos) ++pos_;
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

/// Collects typed fields and issues against a parsed document.
class FieldReader {
 public:
  FieldReader(std::string source, std::map<std::string, int> lines)
      : source_(std::move(source)), lines_(std::move(lines)) {}

  int line_of(std::string ptr) const {
    while (true) {
      auto it = lines_.find(ptr);
      if (it != lines_.end()) return it->second;
      if (ptr.empty()) return 0;
      ptr = ptr.substr(0, ptr.rfind('/'));
    }
  }

  void issue(const std::string& ptr, std::string message) {
    issues_.push_back({ptr, line_of(ptr), std::move(message)});
  }

  bool ok() const { return issues_.empty(); }

  void raise_if_any() const {
    if (!issues_.empty()) throw ConfigInvalid(source_, issues_);
  }

  bool object(const json& j, const std::string& ptr) {
    if (j.is_object()) return true;
    issue(ptr, "expected an object");
    return false;
  }

  void allowed_keys(const json& obj, const std::string& ptr, std::initializer_list<std::string_view> keys) {
    for (const auto& [k, v] : obj.items()) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
        issue(ptr + "/" + escape_pointer_token(k), "unknown key '" + k + "'");
      }
    }
  }

  std::optional<double> number(const json& obj, const std::string& ptr, const std::string& key) {
    if (!obj.contains(key)) return std::nullopt;
    const json& v = obj.at(key);
    if (!v.is_number()) {
      issue(ptr + "/" + key, "expected a number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  std::optional<long long> integer(const json& obj, const std::string& ptr, const std::string& key) {
    if (!obj.contains(key)) return std::nullopt;
    const json& v = obj.at(key);
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e18) return static_cast<long long>(d);
    }
    issue(ptr + "/" + key, "expected an integer");
    return std::nullopt;
  }

  std::optional<std::string> string(const json& obj, const std::string& ptr, const std::string& key) {
    if (!obj.contains(key)) return std::nullopt;
    const json& v = obj.at(key);
    if (!v.is_string()) {
      issue(ptr + "/" + key, "expected a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<bool> boolean(const json& obj, const std::string& ptr, const std::string& key) {
    if (!obj.contains(key)) return std::nullopt;
    const json& v = obj.at(key);
    if (!v.is_boolean()) {
      issue(ptr + "/" + key, "expected true or false");
      return std::nullopt;
    }
    return v.get<bool>();
  }

  void require(bool cond, const std::string& ptr, const std::string& message) {
    if (!cond) issue(ptr, message);
  }

  const std::string& source() const { return source_; }
  const std::map<std::string, int>& lines() const { return lines_; }

 private:
  std::string source_;
  std::map<std::string, int> lines_;
  std::vector<ConfigIssue> issues_;
};

json parse_document(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number.
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
    throw ConfigInvalid(source, {{"", line, std::string("malformed JSON: ") + e.what()}});
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

bool valid_label(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

}  // namespace

ConfigInvalid::ConfigInvalid(const std::string& source, std::vector<ConfigIssue> issues)
    : ConfigError(format_issues(source, issues)), issues_(std::move(issues)) {}

std::map<std::string, int> json_pointer_lines(const std::string& text) { return LineScanner(text).run(); }

// ---------------------------------------------------------------------------
// Seeds and hashing

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t split_seed(std::uint64_t seed, const std::string& tag) {
  std::uint64_t z = seed ^ fnv1a64(tag);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Experiment config

json ExperimentConfig::canonical() const {
  json prob = {{"name", problem.name}};
  if (problem.name == "ridge") {
    prob["lambda"] = problem.lambda;
    prob["eta"] = problem.eta ? json(*problem.eta) : json(nullptr);
    prob["theta_bound"] = problem.theta_bound;
  } else {
    prob["p"] = problem.p;
    prob["eta"] = problem.eta ? json(*problem.eta) : json(nullptr);
    prob["L2"] = problem.L2;
    prob["mu"] = problem.mu;
    prob["L1"] = problem.L1;
    prob["omega"] = problem.omega;
  }
  prob["f_star_hint"] = problem.f_star_hint ? json(*problem.f_star_hint) : json(nullptr);

  json data = {{"source", dataset.source}, {"h_prime", dataset.h_prime}};
  if (dataset.source == "csv") {
    data["path"] = dataset.path;
  } else {
    data["d"] = dataset.d;
    data["n"] = dataset.n;
    data["seed"] = dataset.seed ? json(*dataset.seed) : json(nullptr);
  }

  json opts = json::array();
  for (const auto& o : optimizers) {
    json e = {{"name", o.name}, {"label", o.label}, {"audit", o.audit}};
    e["T"] = o.T ? json(*o.T) : json(nullptr);
    if (o.name == "lpi-gd") {
      e["m"] = o.m;
      e["h"] = o.h;
      e["l"] = o.l ? json(*o.l) : json(nullptr);
      e["kernel"] = o.kernel;
    }
    if (o.name == "sgd") e["with_replacement"] = o.with_replacement;
    opts.push_back(e);
  }
  return {{"name", name},
          {"seed", seed},
          {"problem", prob},
          {"dataset", data},
          {"optimizers", opts},
          {"schedule_mode", to_string(mode)},
          {"epsilon", epsilon},
          {"theta0", theta0 ? json(*theta0) : json(nullptr)},
          {"caps",
           {{"max_grid", max_grid ? json(*max_grid) : json(nullptr)},
            {"max_runtime_s", max_runtime_s ? json(*max_runtime_s) : json(nullptr)}}},
          {"record_wall_time", record_wall_time}};
}

std::string ExperimentConfig::hash() const { return fmt::format("{:016x}", fnv1a64(canonical().dump())); }

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source_name,
                                         const fs::path& base_dir) {
  const json doc = parse_document(text, source_name);
  FieldReader r(source_name, json_pointer_lines(text));
  ExperimentConfig cfg;
  cfg.source_name = source_name;
  if (!r.object(doc, "")) r.raise_if_any();
  r.allowed_keys(doc, "",
                 {"$schema", "name", "seed", "output_dir", "problem", "dataset", "optimizers", "schedule_mode",
                  "epsilon", "theta0", "caps", "record_wall_time"});

  if (auto v = r.string(doc, "", "name")) {
    r.require(valid_label(*v), "/name", "name may only contain letters, digits, '_', '-' and '.'");
    cfg.name = *v;
  }
  if (auto v = r.integer(doc, "", "seed")) {
    r.require(*v >= 0, "/seed", "seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(std::max(0LL, *v));
  }
  cfg.output_dir = base_dir / "lpiopt_out";
  if (auto v = r.string(doc, "", "output_dir")) {
    r.require(!v->empty(), "/output_dir", "output_dir must not be empty");
    cfg.output_dir = fs::path(*v).is_absolute() ? fs::path(*v) : base_dir / *v;
  }
  if (auto v = r.string(doc, "", "schedule_mode")) {
    if (*v == "theory")
      cfg.mode = ScheduleMode::theory;
    else if (*v == "practical")
      cfg.mode = ScheduleMode::practical;
    else
      r.issue("/schedule_mode", "expected 'theory' or 'practical'");
  }
  if (auto v = r.number(doc, "", "epsilon")) {
    r.require(*v > 0.0, "/epsilon", "epsilon must be positive");
    cfg.epsilon = *v;
  }
  if (auto v = r.boolean(doc, "", "record_wall_time")) cfg.record_wall_time = *v;

  // problem
  if (!doc.contains("problem")) {
    r.issue("/problem", "missing required field 'problem'");
  } else if (const json& pj = doc.at("problem"); r.object(pj, "/problem")) {
    auto& P = cfg.problem;
    const auto name = r.string(pj, "/problem", "name");
    if (!name) {
      if (!pj.contains("name")) r.issue("/problem/name", "missing required field 'name'");
    } else if (*name == "ridge") {
      P.name = "ridge";
      r.allowed_keys(pj, "/problem", {"name", "lambda", "eta", "theta_bound", "f_star_hint"});
      if (auto v = r.number(pj, "/problem", "lambda")) {
        r.require(*v > 0.0, "/problem/lambda", "lambda must be positive");
        P.lambda = *v;
      }
      if (auto v = r.number(pj, "/problem", "theta_bound")) {
        r.require(*v > 0.0, "/problem/theta_bound", "theta_bound must be positive");
        P.theta_bound = *v;
      }
    } else if (*name == "synthetic-holder") {
      P.name = "synthetic-holder";
      r.allowed_keys(pj, "/problem", {"name", "p", "eta", "L2", "mu", "L1", "omega", "f_star_hint"});
      if (!pj.contains("eta")) r.issue("/problem/eta", "synthetic-holder needs 'eta'");
      if (auto v = r.integer(pj, "/problem", "p")) {
        r.require(*v >= 1 && *v <= 10000, "/problem/p", "p must lie in [1, 10000]");
        P.p = static_cast<int>(std::clamp<long long>(*v, 1, 10000));
      }
      if (auto v = r.number(pj, "/problem", "L2")) {
        r.require(*v > 0.0, "/problem/L2", "L2 must be positive");
        P.L2 = *v;
      }
      if (auto v = r.number(pj, "/problem", "mu")) {
        r.require(*v > 0.0, "/problem/mu", "mu must be positive");
        P.mu = *v;
      }
      if (auto v = r.number(pj, "/problem", "L1")) P.L1 = *v;
      r.require(P.L1 >= P.mu, "/problem/L1", "L1 must be >= mu");
      if (auto v = r.number(pj, "/problem", "omega")) {
        r.require(*v > 0.0, "/problem/omega", "omega must be positive");
        P.omega = *v;
      }
    } else {
      r.issue("/problem/name", "unknown problem '" + *name + "' (expected 'ridge' or 'synthetic-holder')");
    }
    if (auto v = r.number(pj, "/problem", "eta")) {
      r.require(*v > 0.0 && *v <= 21.0, "/problem/eta", "eta must lie in (0, 21]");
      P.eta = *v;
    }
    if (auto v = r.number(pj, "/problem", "f_star_hint")) P.f_star_hint = *v;
  }

  // dataset
  if (!doc.contains("dataset")) {
    r.issue("/dataset", "missing required field 'dataset'");
  } else if (const json& dj = doc.at("dataset"); r.object(dj, "/dataset")) {
    auto& D = cfg.dataset;
    if (auto v = r.string(dj, "/dataset", "source")) D.source = *v;
    if (D.source == "synthetic") {
      r.allowed_keys(dj, "/dataset", {"source", "d", "n", "h_prime", "seed"});
      if (auto v = r.integer(dj, "/dataset", "d")) {
        r.require(*v >= 1 && *v <= 20, "/dataset/d", "d must lie in [1, 20]");
        D.d = static_cast<int>(std::clamp<long long>(*v, 1, 20));
      }
      if (auto v = r.integer(dj, "/dataset", "n")) {
        r.require(*v >= 2, "/dataset/n", "n must be >= 2");
        D.n = static_cast<std::size_t>(std::max(2LL, *v));
      }
      if (auto v = r.integer(dj, "/dataset", "seed")) {
        r.require(*v >= 0, "/dataset/seed", "seed must be >= 0");
        D.seed = static_cast<std::uint64_t>(std::max(0LL, *v));
      }
    } else if (D.source == "csv") {
      r.allowed_keys(dj, "/dataset", {"source", "path", "h_prime"});
      if (auto v = r.string(dj, "/dataset", "path")) {
        D.path = fs::path(*v).is_absolute() ? *v : (base_dir / *v).string();
      } else if (!dj.contains("path")) {
        r.issue("/dataset/path", "csv datasets need 'path'");
      }
    } else {
      r.issue("/dataset/source", "expected 'synthetic' or 'csv'");
    }
    if (auto v = r.number(dj, "/dataset", "h_prime")) {
      r.require(*v > 0.0 && *v < 0.5, "/dataset/h_prime", "h_prime must lie in (0, 1/2)");
      D.h_prime = *v;
    }
    if (cfg.problem.name == "ridge" && D.source == "synthetic" && D.d < 2) {
      r.issue("/dataset/d", "ridge needs d >= 2 (features plus label)");
    }
  }

  // optimizers
  if (!doc.contains("optimizers")) {
    r.issue("/optimizers", "missing required field 'optimizers'");
  } else if (const json& oj = doc.at("optimizers"); !oj.is_array() || oj.empty()) {
    r.issue("/optimizers", "expected a non-empty array");
  } else {
    std::set<std::string> labels;
    for (std::size_t i = 0; i < oj.size(); ++i) {
      const std::string ptr = "/optimizers/" + std::to_string(i);
      const json& e = oj[i];
      if (!r.object(e, ptr)) continue;
      OptimizerSpec o;
      const auto name = r.string(e, ptr, "name");
      if (!name) {
        if (!e.contains("name")) r.issue(ptr + "/name", "missing required field 'name'");
        continue;
      }
      o.name = *name;
      if (o.name == "gd") {
        r.allowed_keys(e, ptr, {"name", "label", "T", "audit"});
      } else if (o.name == "sgd") {
        r.allowed_keys(e, ptr, {"name", "label", "T", "audit", "with_replacement"});
      } else if (o.name == "lpi-gd") {
        r.allowed_keys(e, ptr, {"name", "label", "T", "m", "h", "l", "kernel", "audit"});
      } else {
        r.issue(ptr + "/name", "unknown optimizer '" + o.name + "' (expected 'gd', 'sgd' or 'lpi-gd')");
        continue;
      }
      o.label = r.string(e, ptr, "label").value_or(o.name);
      r.require(valid_label(o.label), ptr + "/label", "label may only contain letters, digits, '_', '-' and '.'");
      if (!labels.insert(o.label).second) {
        r.issue(ptr + (e.contains("label") ? "/label" : "/name"),
                "duplicate output label '" + o.label + "'; set distinct 'label' fields");
      }
      if (auto v = r.integer(e, ptr, "T")) {
        r.require(*v >= 1 && *v <= 100'000'000, ptr + "/T", "T must lie in [1, 1e8]");
        o.T = static_cast<int>(std::clamp<long long>(*v, 1, 100'000'000));
      }
      if (auto v = r.boolean(e, ptr, "audit")) o.audit = *v;
      if (auto v = r.boolean(e, ptr, "with_replacement")) o.with_replacement = *v;
      const bool theory = cfg.mode == ScheduleMode::theory;
      if (o.name == "lpi-gd") {
        if (auto v = r.integer(e, ptr, "m")) {
          r.require(*v >= 1 && *v <= 2'000'000'000, ptr + "/m", "m must lie in [1, 2e9]");
          o.m = static_cast<int>(std::clamp<long long>(*v, 1, 2'000'000'000));
        }
        if (auto v = r.number(e, ptr, "h")) {
          r.require(*v > 0.0 && *v < 0.5, ptr + "/h", "h must lie in (0, 1/2)");
          o.h = *v;
        }
        if (auto v = r.integer(e, ptr, "l")) {
          r.require(*v >= 0 && *v <= 20, ptr + "/l", "l must lie in [0, 20]");
          o.l = static_cast<int>(std::clamp<long long>(*v, 0, 20));
        }
        if (auto v = r.string(e, ptr, "kernel")) {
          r.require(*v == "boxcar" || *v == "raised-cosine", ptr + "/kernel",
                    "kernel must be 'boxcar' or 'raised-cosine'");
          o.kernel = *v;
        }
        if (theory) {
          for (const char* k : {"T", "m", "h", "l"}) {
            if (e.contains(k)) r.issue(ptr + "/" + k, std::string("'") + k + "' is derived in theory mode; remove it");
          }
        } else {
          for (const char* k : {"T", "m", "h"}) {
            if (!e.contains(k)) r.issue(ptr + "/" + k, std::string("practical mode needs '") + k + "'");
          }
        }
      } else if (!o.T && !(theory && o.name == "gd")) {
        r.issue(ptr + "/T", "missing required field 'T'");
      }
      cfg.optimizers.push_back(o);
    }
  }

  if (doc.contains("theta0")) {
    const json& tj = doc.at("theta0");
    if (!tj.is_array() || tj.empty() || !std::all_of(tj.begin(), tj.end(), [](const json& x) { return x.is_number(); })) {
      r.issue("/theta0", "expected a non-empty array of numbers");
    } else {
      cfg.theta0 = tj.get<std::vector<double>>();
    }
  }

  if (doc.contains("caps")) {
    const json& cj = doc.at("caps");
    if (r.object(cj, "/caps")) {
      r.allowed_keys(cj, "/caps", {"max_grid", "max_runtime_s"});
      if (auto v = r.integer(cj, "/caps", "max_grid")) {
        r.require(*v >= 1, "/caps/max_grid", "max_grid must be >= 1");
        cfg.max_grid = static_cast<std::uint64_t>(std::max(1LL, *v));
      }
      if (auto v = r.number(cj, "/caps", "max_runtime_s")) {
        r.require(*v > 0.0, "/caps/max_runtime_s", "max_runtime_s must be positive");
        cfg.max_runtime_s = *v;
      }
    }
  }

  r.raise_if_any();
  cfg.lines = r.lines();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const InputError& e) {
    throw ConfigInvalid(path.string(), {{"", 0, e.what()}});
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return parse_experiment_config(text, path.string(), base);
}

// ---------------------------------------------------------------------------
// Outputs

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows, double target_epsilon) {
  std::string out =
      "optimizer,epsilon_achieved,oracle_calls,wall_time_s,log10_bound,target_epsilon,iterations_to_target,"
      "oracle_calls_to_target\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.optimizer, num(r.epsilon_achieved), r.oracle_calls,
                       num(r.wall_time_s), r.log10_bound ? num(*r.log10_bound) : "", num(target_epsilon),
                       r.iterations_to_target ? std::to_string(*r.iterations_to_target) : "",
                       r.oracle_calls_to_target ? std::to_string(*r.oracle_calls_to_target) : "");
  }
  return out;
}

namespace {

json versions() {
  return {{"lpiopt", kVersion},
          {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"fmt", FMT_VERSION},
          {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                        NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}};
}

ExperimentResult failure(int code, std::string message) {
  ExperimentResult r;
  r.exit_code = code;
  r.message = std::move(message);
  return r;
}

ConfigInvalid field_error(const ExperimentConfig& cfg, const std::string& ptr, const std::string& message) {
  FieldReader r(cfg.source_name, cfg.lines);
  r.issue(ptr, message);
  return ConfigInvalid(cfg.source_name, {{ptr, r.line_of(ptr), message}});
}

std::uint64_t effective_cap(const ExperimentConfig& cfg) {
  if (std::getenv("LPIOPT_CAP_GRID")) return grid_cap();
  return cfg.max_grid.value_or(kDefaultGridCap);
}

Dataset build_dataset(const ExperimentConfig& cfg) {
  const auto& D = cfg.dataset;
  if (D.source == "csv") {
    int d = 0;
    const auto raw = read_csv_matrix(D.path, d);
    return rescale_dataset(raw, d, D.h_prime);
  }
  const std::uint64_t seed = D.seed.value_or(split_seed(cfg.seed, "dataset"));
  if (cfg.problem.name == "ridge") return synthetic_ridge_dataset(D.d, D.n, D.h_prime, seed);
  return uniform_dataset(D.d, D.n, D.h_prime, seed);
}

LossProblem build_problem(const ExperimentConfig& cfg, int d) {
  const auto& P = cfg.problem;
  LossProblem pr;
  if (P.name == "ridge") {
    if (d < 2) throw InputError("ridge needs d >= 2 (features plus label)");
    pr = ridge_problem(P.lambda, d, P.eta, P.theta_bound);
  } else {
    pr = synthetic_holder_problem(P.eta.value_or(2.0), d, P.p, P.L2, P.mu, P.L1, P.omega,
                                  split_seed(cfg.seed, "problem"));
  }
  pr.f_star_hint = P.f_star_hint;
  return pr;
}

std::optional<double> log10_bound_for(const LossProblem& pr, const OptimizerSpec& o, double epsilon, double gap,
                                      std::size_t n, const Kernel& kernel) {
  if (o.name == "gd") return std::log10(static_cast<double>(n) * std::log(1.0 / epsilon));
  if (o.name == "sgd") return std::log10(1.0 / epsilon);
  if (pr.l < 1 || !(pr.sigma() > 1.0)) return std::nullopt;
  BoundInputs in;
  in.mu = pr.mu;
  in.L1 = pr.L1;
  in.L2 = pr.L2;
  in.b = kernel.lower();
  in.c = kernel.upper();
  in.p = pr.p;
  in.d = pr.d;
  in.eta = pr.eta;
  in.l = pr.l;
  in.epsilon = epsilon;
  in.F_gap = gap;
  in.n = static_cast<double>(n);
  const double v = oracle_bound_eval(in).log10_lpi;
  return std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  // Build inputs; failures here are configuration errors.
  std::optional<Dataset> data;
  std::shared_ptr<const LossProblem> problem;
  try {
    data.emplace(build_dataset(cfg));
    problem = std::make_shared<const LossProblem>(build_problem(cfg, data->dim()));
  } catch (const ConfigInvalid&) {
    throw;
  } catch (const std::exception& e) {
    throw field_error(cfg, "/dataset", e.what());
  }
  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(problem->p);
  if (cfg.theta0) {
    if (static_cast<int>(cfg.theta0->size()) != problem->p) {
      throw field_error(cfg, "/theta0",
                        fmt::format("theta0 has {} entries, problem expects p = {}", cfg.theta0->size(), problem->p));
    }
    theta0 = Eigen::Map<const Eigen::VectorXd>(cfg.theta0->data(), problem->p);
  }

  // Plan every run before executing any of them.
  const std::uint64_t cap = effective_cap(cfg);
  std::vector<Schedule> schedules(cfg.optimizers.size());
  std::vector<int> iterations(cfg.optimizers.size(), 0);
  for (std::size_t i = 0; i < cfg.optimizers.size(); ++i) {
    const auto& o = cfg.optimizers[i];
    const std::string ptr = "/optimizers/" + std::to_string(i);
    if (o.name == "lpi-gd") {
      Schedule s;
      if (cfg.mode == ScheduleMode::theory) {
        try {
          s = theory_schedule(*problem, *data, theta0, cfg.epsilon, o.kernel, cap);
        } catch (const UnsupportedRegimeError& e) {
          throw field_error(cfg, "/schedule_mode", e.what());
        } catch (const ConfigError& e) {
          throw field_error(cfg, "/problem", e.what());
        }
        if (s.infeasible || s.practical_mode_required) {
          return failure(kExitInfeasible,
                         fmt::format("{}: theory schedule infeasible: T = {}, log10 m = {:.6g}, d = {}, log h = {:.6g}, "
                                     "grid cap = {}",
                                     o.label, s.T, s.log10_m, problem->d, s.log_h, cap));
        }
      } else {
        s = practical_schedule(*o.T, o.m, o.h, o.l.value_or(problem->l), o.kernel);
        const auto size = checked_pow(static_cast<std::uint64_t>(o.m), problem->d);
        if (!size || *size > cap) {
          return failure(kExitInfeasible, fmt::format("{}: grid of m^d = {}^{} points exceeds the cap {}", o.label,
                                                      o.m, problem->d, cap));
        }
      }
      for (std::size_t k = 0; k < data->size(); ++k) {
        for (double v : data->sample(k)) {
          if (v < s.h || v > 1.0 - s.h) {
            throw field_error(cfg, ptr + (cfg.mode == ScheduleMode::theory ? "" : "/h"),
                              fmt::format("sample {} leaves [h, 1-h]^d for h = {}; need h <= h' = {}", k, s.h,
                                          data->h_prime()));
          }
        }
      }
      schedules[i] = s;
      iterations[i] = s.T;
    } else if (o.T) {
      iterations[i] = *o.T;
    } else {
      iterations[i] = theory_iterations(problem->sigma(), problem->mu,
                                        std::max(0.0, erm_objective(*problem, *data, as_span(theta0)) -
                                                          f_star(*problem, *data).value),
                                        problem->p, cfg.epsilon);
    }
  }

  const FStar fs_value = f_star(*problem, *data);
  const double gap = std::max(0.0, erm_objective(*problem, *data, as_span(theta0)) - fs_value.value);

  ExperimentResult result;
  result.f_star = fs_value.value;
  std::vector<std::string> skipped;
  bool partial = false;
  const auto t_start = std::chrono::steady_clock::now();
  WeightCache cache;

  for (std::size_t i = 0; i < cfg.optimizers.size(); ++i) {
    const auto& o = cfg.optimizers[i];
    if (partial) {
      skipped.push_back(o.label);
      continue;
    }
    RunOptions opts;
    opts.audit = o.audit;
    opts.f_star = fs_value.value;
    opts.epsilon = cfg.epsilon;
    opts.grid_cap = cap;
    opts.cache = &cache;
    if (cfg.max_runtime_s) {
      const std::chrono::duration<double> used = std::chrono::steady_clock::now() - t_start;
      opts.max_runtime_s = std::max(0.0, *cfg.max_runtime_s - used.count());
    }
    CountingOracle oracle(problem);
    const auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    try {
      if (o.name == "lpi-gd") {
        rep = lpi_gd_run(oracle, *data, schedules[i], theta0, opts);
      } else if (o.name == "gd") {
        rep = gd_run(oracle, *data, iterations[i], theta0, opts);
      } else {
        rep = sgd_run(oracle, *data, iterations[i], theta0, split_seed(cfg.seed, "optimizer/" + o.label),
                      o.with_replacement, opts);
      }
    } catch (const IllPosedFitError& e) {
      throw field_error(cfg, "/optimizers/" + std::to_string(i),
                        fmt::format("{} (lambda_min = {:.3g}, condition = {:.3g}); increase h or m, or lower l",
                                    e.what(), e.lambda_min(), e.condition()));
    } catch (const ResourceError& e) {
      return failure(kExitInfeasible, e.what());
    }
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - t0;

    const std::uint64_t expected = o.name == "lpi-gd" ? *checked_pow(static_cast<std::uint64_t>(schedules[i].m),
                                                                       problem->d) *
                                                            static_cast<std::uint64_t>(rep.iterates.size() - 1)
                                   : o.name == "gd" ? data->size() * (rep.iterates.size() - 1)
                                                    : rep.iterates.size() - 1;
    if (oracle.count() != expected || rep.iterates.back().oracle_count != expected) {
      throw std::logic_error(fmt::format("{}: oracle count {} differs from the expected {}", o.label, oracle.count(),
                                         expected));
    }
    rep.config["label"] = o.label;
    rep.config["seed"] = cfg.seed;
    partial = partial || rep.partial;

    ComparisonRow row;
    row.optimizer = o.label;
    row.epsilon_achieved = rep.iterates.back().F - fs_value.value;
    row.oracle_calls = oracle.count();
    row.wall_time_s = cfg.record_wall_time ? wall.count() : 0.0;
    row.log10_bound = log10_bound_for(*problem, o, cfg.epsilon, gap, data->size(),
                                      kernel_by_name(o.name == "lpi-gd" ? o.kernel : "boxcar"));
    if (auto hit = rep.first_hit(cfg.epsilon)) {
      row.iterations_to_target = *hit;
      row.oracle_calls_to_target = rep.iterates[static_cast<std::size_t>(*hit)].oracle_count;
    }
    result.rows.push_back(row);
    result.reports.push_back(std::move(rep));
  }

  fs::create_directories(cfg.output_dir);
  std::vector<std::string> files;
  for (const auto& rep : result.reports) {
    const std::string label = rep.config.at("label").get<std::string>();
    write_text_file(cfg.output_dir / (label + "_report.json"), rep.to_json().dump(2) + "\n");
    write_text_file(cfg.output_dir / (label + "_series.csv"), rep.to_csv());
    files.push_back(label + "_report.json");
    files.push_back(label + "_series.csv");
  }
  write_text_file(cfg.output_dir / "comparison.csv", comparison_csv(result.rows, cfg.epsilon));
  files.push_back("comparison.csv");
  files.push_back("MANIFEST.json");
  std::sort(files.begin(), files.end());

  result.exit_code = partial ? kExitRuntimeCap : kExitOk;
  json manifest = {{"tool", "lpiopt"},
                   {"config_hash", cfg.hash()},
                   {"config", cfg.canonical()},
                   {"seed", cfg.seed},
                   {"f_star", fs_value.value},
                   {"f_star_closed_form", fs_value.closed_form},
                   {"files", files},
                   {"exit_code", result.exit_code},
                   {"partial", partial},
                   {"skipped", skipped},
                   {"dataset_provenance", data->provenance().to_json()},
                   {"versions", versions()}};
  write_text_file(cfg.output_dir / "MANIFEST.json", manifest.dump(2) + "\n");
  result.files = files;
  if (partial) result.message = "runtime cap reached; outputs are partial";
  return result;
}

int run_experiment_file(const fs::path& config_path, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    const ExperimentResult res = run_experiment(cfg);
    if (res.exit_code == kExitOk || res.exit_code == kExitRuntimeCap) {
      for (const auto& r : res.rows) {
        out << fmt::format("{}: F - F* = {:.6g}, oracle calls = {}\n", r.optimizer, r.epsilon_achieved,
                           r.oracle_calls);
      }
      out << "wrote " << res.files.size() << " files to " << cfg.output_dir.string() << "\n";
    }
    if (!res.message.empty()) err << res.message << "\n";
    return res.exit_code;
  } catch (const ConfigInvalid& e) {
    err << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    err << config_path.string() << ":0: error: " << e.what() << "\n";
    return kExitInvalidConfig;
  }
}

// ---------------------------------------------------------------------------
// Rate fitting and scaling

double rate_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw InputError("rate_fit: xs and ys differ in length");
  if (xs.size() < 3) throw InputError("rate_fit: need at least 3 points");
  double mx = 0.0, my = 0.0;
  const auto n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw InputError("rate_fit: all values must be positive");
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(ys[i]) - my);
  }
  if (sxx == 0.0) throw InputError("rate_fit: xs must not all be equal");
  return sxy / sxx;
}

ScalingTable scaling_table(const ScalingRegime& regime, const std::vector<double>& ns) {
  ScalingTable table;
  table.regime = regime;
  const auto& g = regime;
  table.regime_ok = g.alpha > 0.0 && g.beta > 0.0 && g.tau > std::max(1.0, 1.0 / g.alpha) &&
                    g.gamma > std::max(1.0, g.tau * (g.alpha + g.beta) / 2.0);
  for (double n : ns) {
    if (!(n > std::numbers::e)) throw InputError(fmt::format("scaling_table: n = {} must exceed e", n));
    ScalingRow row;
    row.n = n;
    row.epsilon = std::pow(n, -g.alpha);
    row.p = std::pow(n, g.beta);
    row.d_formula = static_cast<int>(std::floor(std::log(std::log(n)) / (4.0 * std::log(std::numbers::e * (g.gamma + 1.0)))));
    row.d = std::max(1, row.d_formula);
    row.eta = g.tau * (g.alpha + g.beta) * row.d / 2.0;
    row.l = holder_order(row.eta);
    BoundInputs in;
    in.mu = 1.0;
    in.L1 = 2.0;
    in.L2 = 1.0;
    in.p = row.p;
    in.d = row.d;
    in.eta = row.eta;
    in.l = std::max(1, row.l);
    in.epsilon = row.epsilon;
    in.F_gap = 1.0;
    in.n = n;
    const OracleBounds b = oracle_bound_eval(in);
    row.log10_lpi = b.log10_lpi;
    row.log10_gd = std::log10(n * g.alpha * std::log(n));
    row.log10_sgd = g.alpha * std::log10(n);
    row.precondition_ok = b.precondition_ok;
    table.rows.push_back(row);
  }
  return table;
}

std::string ScalingTable::to_csv() const {
  std::string out =
      "n,epsilon,p,d,d_formula,eta,l,log10_lpi,log10_gd,log10_sgd,log10_lpi_over_gd,log10_lpi_over_sgd,"
      "precondition_ok\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", num(r.n), num(r.epsilon), num(r.p), r.d,
                       r.d_formula, num(r.eta), r.l, num(r.log10_lpi), num(r.log10_gd), num(r.log10_sgd),
                       num(r.log10_lpi - r.log10_gd), num(r.log10_lpi - r.log10_sgd), r.precondition_ok ? 1 : 0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interpolation check

InterpCheckConfig parse_interp_check_config(const std::string& text, const std::string& source_name,
                                            const fs::path& base_dir) {
  const json doc = parse_document(text, source_name);
  FieldReader r(source_name, json_pointer_lines(text));
  InterpCheckConfig cfg;
  if (!r.object(doc, "")) r.raise_if_any();
  r.allowed_keys(doc, "",
                 {"$schema", "name", "d", "eta", "l", "kernel", "function", "L2", "omega", "degree", "m", "h_scale",
                  "probes", "seed", "output_dir"});
  if (auto v = r.string(doc, "", "name")) {
    r.require(valid_label(*v), "/name", "name may only contain letters, digits, '_', '-' and '.'");
    cfg.name = *v;
  }
  if (auto v = r.integer(doc, "", "d")) {
    r.require(*v >= 1 && *v <= 6, "/d", "d must lie in [1, 6]");
    cfg.d = static_cast<int>(std::clamp<long long>(*v, 1, 6));
  }
  if (auto v = r.number(doc, "", "eta")) {
    r.require(*v > 0.0 && *v <= 21.0, "/eta", "eta must lie in (0, 21]");
    cfg.eta = *v;
  }
  if (auto v = r.integer(doc, "", "l")) {
    r.require(*v >= 0 && *v <= 20, "/l", "l must lie in [0, 20]");
    cfg.l = static_cast<int>(std::clamp<long long>(*v, 0, 20));
  }
  if (auto v = r.string(doc, "", "kernel")) {
    r.require(*v == "boxcar" || *v == "raised-cosine", "/kernel", "kernel must be 'boxcar' or 'raised-cosine'");
    cfg.kernel = *v;
  }
  if (auto v = r.string(doc, "", "function")) {
    r.require(*v == "trig-ridge" || *v == "polynomial", "/function", "function must be 'trig-ridge' or 'polynomial'");
    cfg.function = *v;
  }
  if (auto v = r.number(doc, "", "L2")) {
    r.require(*v > 0.0, "/L2", "L2 must be positive");
    cfg.L2 = *v;
  }
  if (auto v = r.number(doc, "", "omega")) {
    r.require(*v > 0.0, "/omega", "omega must be positive");
    cfg.omega = *v;
  }
  if (auto v = r.integer(doc, "", "degree")) {
    r.require(*v >= 0 && *v <= 20, "/degree", "degree must lie in [0, 20]");
    cfg.degree = static_cast<int>(std::clamp<long long>(*v, 0, 20));
  }
  if (doc.contains("m")) {
    const json& mj = doc.at("m");
    if (!mj.is_array() || mj.empty() ||
        !std::all_of(mj.begin(), mj.end(), [](const json& x) { return x.is_number_integer() && x.get<long long>() >= 1; })) {
      r.issue("/m", "expected a non-empty array of positive integers");
    } else {
      cfg.m = mj.get<std::vector<int>>();
    }
  }
  if (auto v = r.number(doc, "", "h_scale")) {
    r.require(*v > 0.0, "/h_scale", "h_scale must be positive");
    cfg.h_scale = *v;
  }
  if (auto v = r.integer(doc, "", "probes")) {
    r.require(*v >= 1 && *v <= 1'000'000, "/probes", "probes must lie in [1, 1e6]");
    cfg.probes = static_cast<int>(std::clamp<long long>(*v, 1, 1'000'000));
  }
  if (auto v = r.integer(doc, "", "seed")) {
    r.require(*v >= 0, "/seed", "seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(std::max(0LL, *v));
  }
  cfg.output_dir = base_dir / "lpiopt_out";
  if (auto v = r.string(doc, "", "output_dir")) {
    cfg.output_dir = fs::path(*v).is_absolute() ? fs::path(*v) : base_dir / *v;
  }
  if (r.ok()) {
    const int min_m = *std::min_element(cfg.m.begin(), cfg.m.end());
    r.require(cfg.h_scale / min_m < 0.5, "/h_scale", "h_scale / min(m) must be < 1/2");
  }
  r.raise_if_any();
  return cfg;
}

InterpCheckResult run_interp_check(const InterpCheckConfig& cfg, bool write_files) {
  InterpCheckResult res;
  res.l = cfg.l.value_or(holder_order(cfg.eta));
  std::shared_ptr<const SmoothField> field;
  if (cfg.function == "trig-ridge") {
    field = synthetic_holder_fields(cfg.eta, cfg.d, 1, cfg.L2, cfg.omega, split_seed(cfg.seed, "field")).front();
  } else {
    std::mt19937_64 rng(split_seed(cfg.seed, "field"));
    std::normal_distribution<double> coef(0.0, 1.0);
    std::vector<std::pair<MultiIndex, double>> terms;
    const BasisLayout layout(cfg.d, cfg.degree);
    for (const auto& s : layout.indices()) terms.emplace_back(s, coef(rng));
    field = std::make_shared<PolynomialField>(cfg.d, std::move(terms));
  }
  const double h_max = cfg.h_scale / *std::min_element(cfg.m.begin(), cfg.m.end());
  std::mt19937_64 rng(split_seed(cfg.seed, "probes"));
  std::uniform_real_distribution<double> unit(h_max, 1.0 - h_max);
  std::vector<std::vector<double>> probes(static_cast<std::size_t>(cfg.probes), std::vector<double>(cfg.d));
  for (auto& pt : probes)
    for (auto& v : pt) v = unit(rng);

  const auto g = [&](std::span<const double> x) { return field->value(x); };
  for (int m : cfg.m) {
    InterpConfig ic;
    ic.m = m;
    ic.h = cfg.h_scale / m;
    ic.l = res.l;
    ic.kernel = kernel_by_name(cfg.kernel);
    ic.validate();
    const UniformGrid grid = uniform_grid(m, cfg.d);
    InterpCheckRow row;
    row.m = m;
    row.h = ic.h;
    for (const auto& pt : probes) {
      const LocalFit fit = local_fit(ic, grid, pt);
      row.sup_error = std::max(row.sup_error, std::abs(interpolate(fit, g) - g(pt)));
      row.max_condition = std::max(row.max_condition, fit.condition);
    }
    res.rows.push_back(row);
  }
  std::vector<double> xs, ys;
  for (const auto& row : res.rows) {
    xs.push_back(row.m);
    ys.push_back(row.sup_error);
  }
  const bool fittable = xs.size() >= 3 && std::all_of(ys.begin(), ys.end(), [](double y) { return y > 0.0; });
  res.slope = fittable ? rate_fit(xs, ys) : std::numeric_limits<double>::quiet_NaN();

  if (write_files) {
    std::string csv = "m,h,sup_error,max_condition\n";
    json rows = json::array();
    for (const auto& row : res.rows) {
      csv += fmt::format("{},{},{},{}\n", row.m, num(row.h), num(row.sup_error), num(row.max_condition));
      rows.push_back({{"m", row.m}, {"h", row.h}, {"sup_error", row.sup_error}, {"max_condition", row.max_condition}});
    }
    const json summary = {{"d", cfg.d},
                          {"eta", cfg.eta},
                          {"l", res.l},
                          {"kernel", cfg.kernel},
                          {"function", cfg.function},
                          {"h_scale", cfg.h_scale},
                          {"probes", cfg.probes},
                          {"seed", cfg.seed},
                          {"slope", std::isfinite(res.slope) ? json(res.slope) : json(nullptr)},
                          {"reference_slope", -cfg.eta},
                          {"rows", rows}};
    write_text_file(cfg.output_dir / (cfg.name + ".csv"), csv);
    write_text_file(cfg.output_dir / (cfg.name + ".json"), summary.dump(2) + "\n");
    res.files = {cfg.name + ".csv", cfg.name + ".json"};
  }
  return res;
}

int run_interp_check_file(const fs::path& config_path, std::ostream& out, std::ostream& err) {
  try {
    std::string text;
    try {
      text = read_file(config_path);
    } catch (const InputError& e) {
      throw ConfigInvalid(config_path.string(), {{"", 0, e.what()}});
    }
    const fs::path base = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
    const InterpCheckConfig cfg = parse_interp_check_config(text, config_path.string(), base);
    InterpCheckResult res;
    try {
      res = run_interp_check(cfg);
    } catch (const ResourceError& e) {
      err << e.what() << "\n";
      return kExitInfeasible;
    }
    for (const auto& row : res.rows) {
      out << fmt::format("m = {}: h = {:.6g}, sup error = {:.6g}, max condition = {:.3g}\n", row.m, row.h,
                         row.sup_error, row.max_condition);
    }
    out << fmt::format("log-log slope = {:.6g} (reference -eta = {:.6g})\n", res.slope, -cfg.eta);
    return kExitOk;
  } catch (const ConfigInvalid& e) {
    err << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    err << config_path.string() << ":0: error: " << e.what() << "\n";
    return kExitInvalidConfig;
  }
}

}  // namespace lpiopt
