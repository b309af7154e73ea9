#include "lpiopt/problems.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include "lpiopt/errors.hpp"

namespace lpiopt {

// ---------------------------------------------------------------------------
// Smooth fields

TrigRidgeField::TrigRidgeField(double amplitude, double omega, std::vector<double> direction, double phase)
    : amplitude_(amplitude), omega_(omega), direction_(std::move(direction)), phase_(phase) {
  if (direction_.empty()) throw std::invalid_argument("TrigRidgeField: empty direction");
  for (double a : direction_) {
    if (std::abs(a) > 1.0) throw std::invalid_argument("TrigRidgeField: direction entries must lie in [-1, 1]");
  }
}

double TrigRidgeField::value(std::span<const double> x) const {
  double arg = phase_;
  for (size_t j = 0; j < direction_.size(); ++j) arg += omega_ * direction_[j] * x[j];
  return amplitude_ * std::sin(arg);
}

double TrigRidgeField::derivative(const MultiIndex& s, std::span<const double> x) const {
  double arg = phase_;
  for (size_t j = 0; j < direction_.size(); ++j) arg += omega_ * direction_[j] * x[j];
  const int k = s.order();
  double coeff = amplitude_ * std::pow(omega_, k);
  for (int j = 0; j < s.dim(); ++j) coeff *= std::pow(direction_[static_cast<size_t>(j)], s[j]);
  return coeff * std::sin(arg + k * std::numbers::pi / 2.0);
}

double TrigRidgeField::holder_constant(double eta) const {
  const int l = holder_order(eta);
  const double alpha = eta - l;
  return std::pow(2.0, 1.0 - alpha) * amplitude_ * std::pow(omega_, l + alpha);
}

PolynomialField::PolynomialField(int d, std::vector<std::pair<MultiIndex, double>> terms)
    : d_(d), terms_(std::move(terms)) {
  for (const auto& [s, c] : terms_) {
    if (s.dim() != d_) throw std::invalid_argument("PolynomialField: term dimension mismatch");
  }
}

int PolynomialField::degree() const {
  int deg = 0;
  for (const auto& [s, c] : terms_) {
    if (c != 0.0) deg = std::max(deg, s.order());
  }
  return deg;
}

double PolynomialField::value(std::span<const double> x) const {
  double v = 0.0;
  for (const auto& [s, c] : terms_) v += c * monomial(s, x);
  return v;
}

double PolynomialField::derivative(const MultiIndex& s, std::span<const double> x) const {
  double v = 0.0;
  for (const auto& [r, c] : terms_) {
    double term = c;
    for (int j = 0; j < d_ && term != 0.0; ++j) {
      if (r[j] < s[j]) {
        term = 0.0;
        break;
      }
      for (int k = 0; k < s[j]; ++k) term *= (r[j] - k);
      for (int k = 0; k < r[j] - s[j]; ++k) term *= x[static_cast<size_t>(j)];
    }
    v += term;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Loss problems

Eigen::VectorXd LossProblem::gradient(std::span<const double> x, std::span<const double> theta) const {
  Eigen::VectorXd g(p);
  grad_theta(x, theta, std::span<double>(g.data(), static_cast<size_t>(p)));
  return g;
}

void LossProblem::validate() const {
  if (!(mu > 0.0)) throw std::invalid_argument("loss problem: mu must be positive");
  if (!(L1 >= mu)) throw std::invalid_argument("loss problem: L1 must be >= mu");
  if (d < 1 || p < 1) throw std::invalid_argument("loss problem: d and p must be >= 1");
}

int holder_order(double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("Hoelder exponent must be positive");
  return static_cast<int>(std::ceil(eta)) - 1;
}

LossProblem ridge_problem(double lambda_reg, int d, std::optional<double> eta, double theta_bound) {
  if (d < 2) throw std::invalid_argument("ridge_problem: need d >= 2 (features plus label)");
  if (!(lambda_reg > 0.0)) throw std::invalid_argument("ridge_problem: lambda must be positive");
  LossProblem pr;
  pr.name = "ridge";
  pr.d = d;
  pr.p = d - 1;
  const int p = pr.p;
  pr.loss = [p, lambda_reg](std::span<const double> x, std::span<const double> th) {
    double r = x[static_cast<size_t>(p)];
    double reg = 0.0;
    for (int i = 0; i < p; ++i) {
      r -= th[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
      reg += th[static_cast<size_t>(i)] * th[static_cast<size_t>(i)];
    }
    return r * r + lambda_reg * reg;
  };
  pr.grad_theta = [p, lambda_reg](std::span<const double> x, std::span<const double> th, std::span<double> g) {
    double r = x[static_cast<size_t>(p)];
    for (int i = 0; i < p; ++i) r -= th[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
    for (int i = 0; i < p; ++i) {
      const auto k = static_cast<size_t>(i);
      g[k] = -2.0 * r * x[k] + 2.0 * lambda_reg * th[k];
    }
  };
  pr.mu = 2.0 * lambda_reg;
  pr.L1 = 2.0 * lambda_reg + 2.0 * (d - 1);
  pr.eta = eta.value_or(static_cast<double>(d + 1));
  pr.l = holder_order(pr.eta);
  // The gradient is quadratic in x, so derivatives of order >= 2 are constant and
  // any positive L2 is valid once l >= 2. Below that, bound the next derivative
  // over ||theta||_inf <= theta_bound and convert Lipschitz to Hoelder on [0,1]^d.
  const double alpha = pr.eta - pr.l;
  const double spread = std::pow(static_cast<double>(d), 1.0 - alpha);
  if (pr.l >= 2) {
    pr.L2 = 1.0;
  } else if (pr.l == 1) {
    pr.L2 = std::max(4.0 * theta_bound, 2.0) * spread;
  } else {
    pr.L2 = (2.0 * (1.0 + (d - 1) * theta_bound) + 4.0 * theta_bound + 2.0) * spread;
  }
  pr.minimizer = [p, lambda_reg](const Dataset& data) {
    const auto n = static_cast<double>(data.size());
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto x = data.sample(i);
      const Eigen::Map<const Eigen::VectorXd> feat(x.data(), p);
      gram.noalias() += feat * feat.transpose();
      rhs += x[static_cast<size_t>(p)] * feat;
    }
    gram /= n;
    rhs /= n;
    gram.diagonal().array() += lambda_reg;
    return Eigen::VectorXd(gram.ldlt().solve(rhs));
  };
  return pr;
}

LossProblem field_problem(std::string name, std::vector<std::shared_ptr<const SmoothField>> fields, double mu,
                          double L1, double eta, double L2) {
  if (fields.empty()) throw std::invalid_argument("field_problem: need at least one field");
  LossProblem pr;
  pr.name = std::move(name);
  pr.d = fields.front()->dim();
  pr.p = static_cast<int>(fields.size());
  for (const auto& f : fields) {
    if (f->dim() != pr.d) throw std::invalid_argument("field_problem: fields disagree on dimension");
  }
  pr.loss = [fields, mu](std::span<const double> x, std::span<const double> th) {
    double v = 0.0;
    for (size_t i = 0; i < fields.size(); ++i) v += 0.5 * mu * th[i] * th[i] + th[i] * fields[i]->value(x);
    return v;
  };
  pr.grad_theta = [fields, mu](std::span<const double> x, std::span<const double> th, std::span<double> g) {
    for (size_t i = 0; i < fields.size(); ++i) g[i] = mu * th[i] + fields[i]->value(x);
  };
  pr.mu = mu;
  pr.L1 = L1;
  pr.eta = eta;
  pr.l = holder_order(eta);
  pr.L2 = L2;
  pr.minimizer = [fields, mu](const Dataset& data) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fields.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (size_t k = 0; k < fields.size(); ++k) mean[static_cast<Eigen::Index>(k)] += fields[k]->value(data.sample(i));
    }
    mean /= static_cast<double>(data.size());
    return Eigen::VectorXd(-mean / mu);
  };
  pr.validate();
  return pr;
}

std::vector<std::shared_ptr<const TrigRidgeField>> synthetic_holder_fields(double eta, int d, int p, double L2_target,
                                                                           double omega, std::uint64_t seed) {
  if (!(L2_target > 0.0)) throw std::invalid_argument("synthetic_holder_fields: L2 must be positive");
  const int l = holder_order(eta);
  const double alpha = eta - l;
  const double amplitude = L2_target / (std::pow(2.0, 1.0 - alpha) * std::pow(omega, l + alpha));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<std::shared_ptr<const TrigRidgeField>> out;
  for (int i = 0; i < p; ++i) {
    std::vector<double> dir(static_cast<size_t>(d));
    for (auto& a : dir) a = unit(rng);
    const double peak = std::abs(*std::max_element(dir.begin(), dir.end(), [](double a, double b) {
      return std::abs(a) < std::abs(b);
    }));
    for (auto& a : dir) a /= peak;
    const double phase = std::numbers::pi * unit(rng);
    out.push_back(std::make_shared<TrigRidgeField>(amplitude, omega, std::move(dir), phase));
  }
  return out;
}

LossProblem synthetic_holder_problem(double eta, int d, int p, double L2_target, double mu, double L1, double omega,
                                     std::uint64_t seed) {
  auto trig = synthetic_holder_fields(eta, d, p, L2_target, omega, seed);
  std::vector<std::shared_ptr<const SmoothField>> fields(trig.begin(), trig.end());
  return field_problem("synthetic-holder", std::move(fields), mu, L1, eta, L2_target);
}

// ---------------------------------------------------------------------------
// Datasets

nlohmann::json Provenance::to_json() const {
  return {{"h_prime", h_prime}, {"raw_min", raw_min}, {"raw_max", raw_max}};
}

Provenance Provenance::from_json(const nlohmann::json& j) {
  Provenance p;
  p.h_prime = j.at("h_prime").get<double>();
  p.raw_min = j.at("raw_min").get<std::vector<double>>();
  p.raw_max = j.at("raw_max").get<std::vector<double>>();
  return p;
}

Dataset::Dataset(int d, std::vector<double> samples, Provenance provenance)
    : d_(d), samples_(std::move(samples)), provenance_(std::move(provenance)) {
  if (d_ < 1) throw InputError("dataset: d must be >= 1");
  if (samples_.empty() || samples_.size() % static_cast<size_t>(d_) != 0) {
    throw InputError("dataset: need n >= 1 complete samples");
  }
  const double lo = provenance_.h_prime;
  const double hi = 1.0 - provenance_.h_prime;
  for (size_t i = 0; i < samples_.size(); ++i) {
    if (!(samples_[i] >= lo && samples_[i] <= hi)) {
      throw InputError(fmt::format("dataset: sample {} coordinate {} = {} outside [{}, {}]", i / static_cast<size_t>(d_),
                                   i % static_cast<size_t>(d_), samples_[i], lo, hi));
    }
  }
}

std::vector<double> Dataset::inverse() const {
  std::vector<double> raw(samples_.size());
  const double lo = provenance_.h_prime;
  const double span = 1.0 - 2.0 * lo;
  for (size_t i = 0; i < samples_.size(); ++i) {
    const size_t j = i % static_cast<size_t>(d_);
    raw[i] = provenance_.raw_min[j] + (samples_[i] - lo) / span * (provenance_.raw_max[j] - provenance_.raw_min[j]);
  }
  return raw;
}

Dataset rescale_dataset(const std::vector<double>& raw, int d, double h_prime) {
  if (d < 1 || raw.empty() || raw.size() % static_cast<size_t>(d) != 0) {
    throw InputError("rescale_dataset: raw data must be a non-empty n x d matrix");
  }
  if (!(h_prime > 0.0 && h_prime < 0.5)) throw InputError("rescale_dataset: h' must lie in (0, 1/2)");
  const size_t n = raw.size() / static_cast<size_t>(d);
  Provenance prov;
  prov.h_prime = h_prime;
  prov.raw_min.assign(static_cast<size_t>(d), std::numeric_limits<double>::infinity());
  prov.raw_max.assign(static_cast<size_t>(d), -std::numeric_limits<double>::infinity());
  for (size_t i = 0; i < raw.size(); ++i) {
    const size_t j = i % static_cast<size_t>(d);
    if (!std::isfinite(raw[i])) throw InputError(fmt::format("rescale_dataset: non-finite value in column {}", j));
    prov.raw_min[j] = std::min(prov.raw_min[j], raw[i]);
    prov.raw_max[j] = std::max(prov.raw_max[j], raw[i]);
  }
  for (size_t j = 0; j < static_cast<size_t>(d); ++j) {
    if (!(prov.raw_max[j] > prov.raw_min[j])) {
      throw InputError(fmt::format("rescale_dataset: column {} has a degenerate (constant) range", j));
    }
  }
  const double lo = h_prime;
  const double hi = 1.0 - h_prime;
  std::vector<double> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const size_t j = i % static_cast<size_t>(d);
    const double v = lo + (raw[i] - prov.raw_min[j]) / (prov.raw_max[j] - prov.raw_min[j]) * (hi - lo);
    out[i] = std::clamp(v, lo, hi);
  }
  (void)n;
  return Dataset(d, std::move(out), std::move(prov));
}

std::vector<double> read_csv_matrix(const std::string& path, int& d_out) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path + "'");
  std::vector<double> values;
  int d = -1;
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    bool numeric = true;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cell = b == std::string::npos ? std::string() : cell.substr(b, e - b + 1);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw InputError(fmt::format("{}:{}: non-numeric cell", path, line_no));
    }
    first = false;
    if (d < 0) d = static_cast<int>(row.size());
    if (static_cast<int>(row.size()) != d) {
      throw InputError(fmt::format("{}:{}: expected {} columns, found {}", path, line_no, d, row.size()));
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  if (values.empty()) throw InputError("dataset '" + path + "' has no samples");
  d_out = d;
  return values;
}

Dataset synthetic_ridge_dataset(int d, std::size_t n, double h_prime, std::uint64_t seed) {
  if (d < 2) throw InputError("synthetic_ridge_dataset: need d >= 2");
  if (n < 2) throw InputError("synthetic_ridge_dataset: need n >= 2 to define a column range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<double> raw(n * static_cast<size_t>(d));
  for (std::size_t i = 0; i < n; ++i) {
    double y = 0.2;
    for (int j = 0; j < d - 1; ++j) {
      const double v = unit(rng);
      raw[i * static_cast<size_t>(d) + static_cast<size_t>(j)] = v;
      y += 0.6 * v / (d - 1);
    }
    raw[i * static_cast<size_t>(d) + static_cast<size_t>(d - 1)] = y + noise(rng);
  }
  return rescale_dataset(raw, d, h_prime);
}

Dataset uniform_dataset(int d, std::size_t n, double h_prime, std::uint64_t seed) {
  if (n < 1) throw InputError("uniform_dataset: need n >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(h_prime, 1.0 - h_prime);
  std::vector<double> samples(n * static_cast<size_t>(d));
  for (auto& v : samples) v = unit(rng);
  Provenance prov;
  prov.h_prime = h_prime;
  prov.raw_min.assign(static_cast<size_t>(d), h_prime);
  prov.raw_max.assign(static_cast<size_t>(d), 1.0 - h_prime);
  return Dataset(d, std::move(samples), std::move(prov));
}

// ---------------------------------------------------------------------------
// Oracle and objective

CountingOracle::CountingOracle(std::shared_ptr<const LossProblem> problem) : problem_(std::move(problem)) {
  if (!problem_) throw std::invalid_argument("CountingOracle: null problem");
}

void CountingOracle::query(std::span<const double> x, std::span<const double> theta, std::span<double> out) {
  if (static_cast<int>(x.size()) != problem_->d) throw DomainError("oracle query: wrong data dimension");
  for (size_t j = 0; j < x.size(); ++j) {
    if (!(x[j] >= 0.0 && x[j] <= 1.0)) {
      throw DomainError(fmt::format("oracle query: x[{}] = {} outside [0, 1]", j, x[j]));
    }
  }
  problem_->grad_theta(x, theta, out);
  count_.fetch_add(1, std::memory_order_relaxed);
}

Eigen::VectorXd CountingOracle::query(std::span<const double> x, std::span<const double> theta) {
  Eigen::VectorXd g(problem_->p);
  query(x, theta, std::span<double>(g.data(), static_cast<size_t>(problem_->p)));
  return g;
}

double erm_objective(const LossProblem& problem, const Dataset& data, std::span<const double> theta) {
  if (data.size() == 0) throw InputError("erm_objective: empty dataset");
  if (data.dim() != problem.d || static_cast<int>(theta.size()) != problem.p) {
    throw InputError("erm_objective: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) acc += problem.loss(data.sample(i), theta);
  return acc / static_cast<double>(data.size());
}

Eigen::VectorXd erm_gradient(const LossProblem& problem, const Dataset& data, std::span<const double> theta) {
  if (data.size() == 0) throw InputError("erm_gradient: empty dataset");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(problem.p);
  Eigen::VectorXd g(problem.p);
  for (std::size_t i = 0; i < data.size(); ++i) {
    problem.grad_theta(data.sample(i), theta, std::span<double>(g.data(), static_cast<size_t>(problem.p)));
    acc += g;
  }
  return acc / static_cast<double>(data.size());
}

FStar f_star(const LossProblem& problem, const Dataset& data, double tolerance) {
  FStar out;
  if (problem.minimizer) {
    out.theta = problem.minimizer(data);
    out.value = erm_objective(problem, data, as_span(out.theta));
    out.closed_form = true;
    return out;
  }
  // ||grad F||^2 / (2 mu) upper-bounds F - F_* under mu-strong convexity.
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(problem.p);
  constexpr int kMaxIterations = 1'000'000;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Eigen::VectorXd g = erm_gradient(problem, data, as_span(theta));
    if (g.squaredNorm() / (2.0 * problem.mu) <= tolerance) break;
    theta -= g / problem.L1;
  }
  out.theta = theta;
  out.value = erm_objective(problem, data, as_span(theta));
  if (problem.f_star_hint) out.value = std::min(out.value, *problem.f_star_hint);
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

double finite_diff_check(const LossProblem& problem, std::span<const double> x, std::span<const double> theta,
                         double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  const Eigen::VectorXd g = problem.gradient(x, theta);
  std::vector<double> th(theta.begin(), theta.end());
  double worst = 0.0;
  for (int i = 0; i < problem.p; ++i) {
    const auto k = static_cast<size_t>(i);
    const double orig = th[k];
    th[k] = orig + step;
    const double up = problem.loss(x, th);
    th[k] = orig - step;
    const double down = problem.loss(x, th);
    th[k] = orig;
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(fd - g[i]) / (1.0 + std::abs(g[i])));
  }
  return worst;
}

TaylorCheck taylor_remainder_check(const SmoothField& g, double eta, double L2, std::span<const double> x,
                                   std::span<const double> u) {
  const int d = g.dim();
  const int l = holder_order(eta);
  const BasisLayout layout(d, l);
  std::vector<double> diff(static_cast<size_t>(d));
  double l1 = 0.0;
  for (int j = 0; j < d; ++j) {
    diff[static_cast<size_t>(j)] = x[static_cast<size_t>(j)] - u[static_cast<size_t>(j)];
    l1 += std::abs(diff[static_cast<size_t>(j)]);
  }
  double taylor = 0.0;
  for (const auto& s : layout.indices()) {
    taylor += g.derivative(s, u) / static_cast<double>(s.factorial()) * monomial(s, diff);
  }
  TaylorCheck out;
  out.remainder = std::abs(g.value(x) - taylor);
  out.bound = L2 / static_cast<double>(exact_factorial(l)) * std::pow(l1, eta);
  // Rounding slack proportional to the magnitude of the terms involved.
  out.ok = out.remainder <= out.bound + 1e-12 * (1.0 + std::abs(g.value(x)));
  return out;
}

double holder_probe(const SmoothField& g, double eta, int samples, std::uint64_t seed) {
  const int d = g.dim();
  const int l = holder_order(eta);
  const double alpha = eta - l;
  const BasisLayout layout(d, l);
  std::vector<MultiIndex> top;
  for (const auto& s : layout.indices()) {
    if (s.order() == l) top.push_back(s);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> y1(static_cast<size_t>(d)), y2(static_cast<size_t>(d));
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    double l1 = 0.0;
    for (int j = 0; j < d; ++j) {
      y1[static_cast<size_t>(j)] = unit(rng);
      y2[static_cast<size_t>(j)] = unit(rng);
      l1 += std::abs(y1[static_cast<size_t>(j)] - y2[static_cast<size_t>(j)]);
    }
    if (l1 < 1e-9) continue;
    for (const auto& s : top) {
      const double ratio = std::abs(g.derivative(s, y1) - g.derivative(s, y2)) / std::pow(l1, alpha);
      worst = std::max(worst, ratio);
    }
  }
  return worst;
}

}  // namespace lpiopt
