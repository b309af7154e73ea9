#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "lpiopt/multiindex.hpp"

namespace lpiopt {

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<size_t>(v.size())};
}

/// Scalar function on [0,1]^d with analytic partial derivatives.
class SmoothField {
 public:
  virtual ~SmoothField() = default;
  virtual int dim() const = 0;
  virtual double value(std::span<const double> x) const = 0;
  /// nabla^s g(x)
  virtual double derivative(const MultiIndex& s, std::span<const double> x) const = 0;
};

/// g(x) = A sin(omega <a, x> + phase) with |a_j| <= 1.
class TrigRidgeField final : public SmoothField {
 public:
  TrigRidgeField(double amplitude, double omega, std::vector<double> direction, double phase);

  int dim() const override { return static_cast<int>(direction_.size()); }
  double value(std::span<const double> x) const override;
  double derivative(const MultiIndex& s, std::span<const double> x) const override;

  /// Hoelder constant (in the l1 norm) of the order-l derivatives with exponent
  /// alpha = eta - l in (0, 1]: 2^{1-alpha} A omega^{l+alpha}.
  double holder_constant(double eta) const;

 private:
  double amplitude_;
  double omega_;
  std::vector<double> direction_;
  double phase_;
};

/// g(x) = sum_s c_s x^s.
class PolynomialField final : public SmoothField {
 public:
  PolynomialField(int d, std::vector<std::pair<MultiIndex, double>> terms);

  int dim() const override { return d_; }
  int degree() const;
  double value(std::span<const double> x) const override;
  double derivative(const MultiIndex& s, std::span<const double> x) const override;

 private:
  int d_;
  std::vector<std::pair<MultiIndex, double>> terms_;
};

class Dataset;

/// Parametrized loss f(x; theta) on [0,1]^d x R^p together with the constants
/// of its smoothness class.
struct LossProblem {
  std::string name;
  int d = 0;
  int p = 0;
  std::function<double(std::span<const double> x, std::span<const double> theta)> loss;
  std::function<void(std::span<const double> x, std::span<const double> theta, std::span<double> grad)> grad_theta;
  double mu = 0.0;
  double L1 = 0.0;
  double L2 = 0.0;
  double eta = 0.0;
  int l = 0;  // ceil(eta) - 1
  std::optional<double> f_star_hint;
  /// Exact minimizer of the ERM objective over a dataset, where one is known.
  std::function<Eigen::VectorXd(const Dataset&)> minimizer;

  double sigma() const { return L1 / mu; }
  Eigen::VectorXd gradient(std::span<const double> x, std::span<const double> theta) const;
  /// Throws std::invalid_argument unless mu > 0 and L1 >= mu.
  void validate() const;
};

/// l = ceil(eta) - 1.
int holder_order(double eta);

/// f(x; theta) = (y - theta^T x_feat)^2 + lambda ||theta||^2 with the label in the
/// last coordinate, p = d - 1. mu = 2 lambda, L1 = 2 lambda + 2 (d - 1).
/// eta defaults to d + 1 (l = d); theta_bound enters L2 only when l <= 1.
LossProblem ridge_problem(double lambda_reg, int d, std::optional<double> eta = std::nullopt,
                          double theta_bound = 10.0);

/// f(x; theta) = (mu/2) ||theta||^2 + theta^T g(x), one field per parameter.
/// L1 is a declared upper bound on the gradient Lipschitz constant (>= mu).
LossProblem field_problem(std::string name, std::vector<std::shared_ptr<const SmoothField>> fields,
                          double mu, double L1, double eta, double L2);

/// field_problem with trig-ridge fields scaled so their certified Hoelder constant equals L2_target.
LossProblem synthetic_holder_problem(double eta, int d, int p, double L2_target, double mu = 1.0,
                                     double L1 = 2.0, double omega = 6.0, std::uint64_t seed = 7);

/// The trig-ridge fields behind synthetic_holder_problem, for diagnostics.
std::vector<std::shared_ptr<const TrigRidgeField>> synthetic_holder_fields(double eta, int d, int p,
                                                                           double L2_target, double omega = 6.0,
                                                                           std::uint64_t seed = 7);

/// Affine map used to bring raw data into [h', 1 - h']^d, per column.
struct Provenance {
  double h_prime = 0.0;
  std::vector<double> raw_min;
  std::vector<double> raw_max;

  nlohmann::json to_json() const;
  static Provenance from_json(const nlohmann::json& j);
};

/// n samples in [h', 1 - h']^d, stored row-major.
class Dataset {
 public:
  /// Throws InputError if n = 0, shapes disagree or a coordinate leaves [h', 1 - h'].
  Dataset(int d, std::vector<double> samples, Provenance provenance);

  int dim() const { return d_; }
  std::size_t size() const { return samples_.size() / static_cast<size_t>(d_); }
  std::span<const double> sample(std::size_t i) const {
    return {samples_.data() + i * static_cast<size_t>(d_), static_cast<size_t>(d_)};
  }
  const std::vector<double>& flat() const { return samples_; }
  double h_prime() const { return provenance_.h_prime; }
  const Provenance& provenance() const { return provenance_; }

  /// Maps the samples back to raw coordinates.
  std::vector<double> inverse() const;

 private:
  int d_;
  std::vector<double> samples_;
  Provenance provenance_;
};

/// Raw n x d data (row-major) mapped column-wise onto [h', 1 - h'].
/// Throws InputError on a constant or non-finite column.
Dataset rescale_dataset(const std::vector<double>& raw, int d, double h_prime);

/// Reads one sample per row, d comma-separated columns, optional header row.
std::vector<double> read_csv_matrix(const std::string& path, int& d_out);

/// Synthetic ridge data: features uniform, label linear in the features plus
/// Gaussian noise, then rescaled onto [h', 1 - h']^d.
Dataset synthetic_ridge_dataset(int d, std::size_t n, double h_prime, std::uint64_t seed);

/// Samples uniform on [h', 1 - h']^d.
Dataset uniform_dataset(int d, std::size_t n, double h_prime, std::uint64_t seed);

/// First-order oracle that counts successful queries.
class CountingOracle {
 public:
  explicit CountingOracle(std::shared_ptr<const LossProblem> problem);
  CountingOracle(const CountingOracle&) = delete;
  CountingOracle& operator=(const CountingOracle&) = delete;

  /// grad_theta f(x; theta). Throws DomainError (count unchanged) when x is outside [0,1]^d.
  void query(std::span<const double> x, std::span<const double> theta, std::span<double> out);
  Eigen::VectorXd query(std::span<const double> x, std::span<const double> theta);

  std::uint64_t count() const { return count_.load(std::memory_order_relaxed); }
  const LossProblem& problem() const { return *problem_; }
  std::shared_ptr<const LossProblem> problem_ptr() const { return problem_; }

 private:
  std::shared_ptr<const LossProblem> problem_;
  std::atomic<std::uint64_t> count_{0};
};

/// F(theta) = (1/n) sum_i f(x_i; theta).
double erm_objective(const LossProblem& problem, const Dataset& data, std::span<const double> theta);

/// Mean per-sample gradient, computed without an oracle.
Eigen::VectorXd erm_gradient(const LossProblem& problem, const Dataset& data, std::span<const double> theta);

struct FStar {
  double value = 0.0;
  Eigen::VectorXd theta;
  bool closed_form = false;
};

/// Minimum of the ERM objective: closed form when the problem has one,
/// otherwise exact GD until ||grad F||^2 / (2 mu) <= tolerance.
FStar f_star(const LossProblem& problem, const Dataset& data, double tolerance = 1e-12);

/// max_i |central difference_i - grad_i| / (1 + |grad_i|).
double finite_diff_check(const LossProblem& problem, std::span<const double> x, std::span<const double> theta,
                         double step);

struct TaylorCheck {
  double remainder = 0.0;  // |g(x) - T_l g(u; x)|
  double bound = 0.0;      // (L2 / l!) ||x - u||_1^eta
  bool ok = false;
};

/// Compares the order-l Taylor remainder of g around u with (L2 / l!) ||x - u||_1^eta.
TaylorCheck taylor_remainder_check(const SmoothField& g, double eta, double L2, std::span<const double> x,
                                   std::span<const double> u);

/// max over `samples` random pairs of |nabla^s g(y1) - nabla^s g(y2)| / ||y1 - y2||_1^{eta - l}, |s| = l.
double holder_probe(const SmoothField& g, double eta, int samples, std::uint64_t seed);

}  // namespace lpiopt
