#include "lpiopt/spectra.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "lpiopt/errors.hpp"

namespace lpiopt {

namespace {

Rational rational_factorial(const MultiIndex& s) {
  return Rational(boost::multiprecision::cpp_int(s.factorial()));
}

}  // namespace

Rational script_b_entry(const MultiIndex& r, const MultiIndex& s) {
  if (r.dim() != s.dim()) throw std::invalid_argument("script_b_entry: dimension mismatch");
  Rational value(boost::multiprecision::cpp_int(1) << r.dim());
  for (int j = 0; j < r.dim(); ++j) {
    const int e = r[j] + s[j];
    if (e % 2 != 0) return Rational(0);
    value /= (e + 1);
  }
  value /= rational_factorial(r);
  value /= rational_factorial(s);
  return value;
}

ScriptB::ScriptB(int d, int l) : layout_(d, l) {
  const int n = layout_.size();
  if (n > kScriptBCap) {
    throw ResourceError("integral matrix of size D = " + std::to_string(n) + " exceeds cap " +
                        std::to_string(kScriptBCap));
  }
  entries_.resize(static_cast<size_t>(n) * static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      Rational v = script_b_entry(layout_[i], layout_[j]);
      entries_[static_cast<size_t>(i * n + j)] = v;
      entries_[static_cast<size_t>(j * n + i)] = std::move(v);
    }
  }
}

Eigen::MatrixXd ScriptB::to_double() const {
  const int n = size();
  Eigen::MatrixXd out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = (*this)(i, j).convert_to<double>();
  return out;
}

ScriptB script_b_matrix(int d, int l) { return ScriptB(d, l); }

double legendre(int k, double t) {
  if (k < 0) throw std::invalid_argument("legendre: negative degree");
  // Standard P_k by (n+1) P_{n+1} = (2n+1) t P_n - n P_{n-1}, then scale to unit L2 norm.
  double p_prev = 1.0;
  double p = t;
  if (k == 0) {
    p = 1.0;
  } else {
    for (int n = 1; n < k; ++n) {
      const double next = ((2.0 * n + 1.0) * t * p - n * p_prev) / (n + 1.0);
      p_prev = p;
      p = next;
    }
  }
  return std::sqrt(k + 0.5) * p;
}

double legendre_product(const MultiIndex& r, std::span<const double> u) {
  if (static_cast<int>(u.size()) != r.dim()) throw std::invalid_argument("legendre_product: dimension mismatch");
  double v = 1.0;
  for (int j = 0; j < r.dim(); ++j) v *= legendre(r[j], u[static_cast<size_t>(j)]);
  return v;
}

double cholesky_diagonal(const MultiIndex& s) {
  double log_v = s.order() * std::numbers::ln2 + 0.5 * s.dim() * std::numbers::ln2 -
                 std::log(static_cast<double>(s.factorial()));
  for (int j = 0; j < s.dim(); ++j) {
    log_v -= 0.5 * std::log(2.0 * s[j] + 1.0);
    log_v -= std::log(static_cast<double>(binomial(2 * s[j], s[j])));
  }
  return std::exp(log_v);
}

Rational cholesky_diagonal_squared(const MultiIndex& s) {
  using boost::multiprecision::cpp_int;
  // 4^{|s|} 2^d / (s!)^2 * prod_j 1 / ((2 s_j + 1) C(2 s_j, s_j)^2)
  Rational v(cpp_int(1) << (2 * s.order() + s.dim()));
  const Rational fact = rational_factorial(s);
  v /= fact * fact;
  for (int j = 0; j < s.dim(); ++j) {
    const cpp_int c(binomial(2 * s[j], s[j]));
    v /= Rational(cpp_int(2 * s[j] + 1) * c * c);
  }
  return v;
}

Rational exact_determinant(const ScriptB& b) {
  const int n = b.size();
  std::vector<Rational> a(static_cast<size_t>(n) * static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a[static_cast<size_t>(i * n + j)] = b(i, j);
  auto at = [&](int i, int j) -> Rational& { return a[static_cast<size_t>(i * n + j)]; };
  Rational det(1);
  for (int k = 0; k < n; ++k) {
    int pivot = k;
    while (pivot < n && at(pivot, k) == 0) ++pivot;
    if (pivot == n) return Rational(0);
    if (pivot != k) {
      for (int j = 0; j < n; ++j) std::swap(at(k, j), at(pivot, j));
      det = -det;
    }
    const Rational piv = at(k, k);
    det *= piv;
    for (int i = k + 1; i < n; ++i) {
      if (at(i, k) == 0) continue;
      const Rational factor = at(i, k) / piv;
      for (int j = k; j < n; ++j) at(i, j) -= factor * at(k, j);
    }
  }
  return det;
}

DetIdentityReport det_identity_check(int d, int l) {
  const ScriptB b = script_b_matrix(d, l);
  DetIdentityReport report;
  report.D = b.size();

  double log_chol = 0.0;
  for (const auto& s : b.layout().indices()) log_chol += 2.0 * std::log(cholesky_diagonal(s));
  report.log_det_cholesky = log_chol;

  // Jacobi-scale before the floating factorization: det(B) = det(S B S) / det(S)^2.
  const Eigen::MatrixXd bd = b.to_double();
  const Eigen::VectorXd scale = bd.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd scaled = scale.asDiagonal() * bd * scale.asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt(scaled);
  if (llt.info() != Eigen::Success) {
    report.log_det_direct = std::numeric_limits<double>::quiet_NaN();
  } else {
    double log_det = 0.0;
    for (int i = 0; i < report.D; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    log_det -= 2.0 * scale.array().log().sum();
    report.log_det_direct = log_det;
  }
  report.relative_gap = std::abs(std::expm1(report.log_det_direct - report.log_det_cholesky));

  if (report.D <= kExactDetCap) {
    Rational product(1);
    for (const auto& s : b.layout().indices()) product *= cholesky_diagonal_squared(s);
    report.det_exact = exact_determinant(b);
    report.det_cholesky_exact = product;
    report.exact_match = (*report.det_exact == product);
  }
  return report;
}

LogLambda lambda_log(int d, int l) {
  if (d < 1 || l < 1) throw std::invalid_argument("lambda_log: need d >= 1 and l >= 1");
  const double ratio = static_cast<double>(l + d) / d;
  const double d_prime = std::pow(ratio, d);
  const double e_term = std::pow(std::numbers::e * ratio, d);
  const double base = std::numbers::pi * d / (8.0 * std::numbers::e * std::numbers::e);
  LogLambda out;
  out.d = d;
  out.l = l;
  out.log_value = d * d_prime * std::log(base) + (d_prime - 1.0) * std::log(d_prime - 1.0) -
                  3.0 * l * e_term * std::log(static_cast<double>(l + d));
  out.theorem_regime = l >= d && d >= 19;
  return out;
}

MinEigReport min_eig_report(int d, int l) {
  const Eigen::MatrixXd b = script_b_matrix(d, l).to_double();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b, Eigen::EigenvaluesOnly);
  MinEigReport report;
  report.lambda_min = eig.eigenvalues()(0);
  if (l >= 1) {
    const LogLambda lam = lambda_log(d, l);
    report.log_lambda_bound = lam.log_value;
    report.bound_applicable = lam.theorem_regime;
    report.bound_holds = std::log(report.lambda_min) >= lam.log_value;
  }
  return report;
}

double script_b_trace(int d, int l) {
  const BasisLayout layout(d, l);
  double tr = 0.0;
  for (const auto& s : layout.indices()) tr += script_b_entry(s, s).convert_to<double>();
  return tr;
}

double script_b_trace_bound(int d) { return std::pow(2.0 * std::numbers::e, d); }

SpectraSummary spectra_check(int d, int l) {
  SpectraSummary out;
  out.d = d;
  out.l = l;
  const MinEigReport eig = min_eig_report(d, l);
  out.lambda_min = eig.lambda_min;
  out.log_lambda = eig.log_lambda_bound;
  const DetIdentityReport det = det_identity_check(d, l);
  out.D = det.D;
  out.det_gap = det.relative_gap;
  out.trace = script_b_trace(d, l);
  out.trace_bound = script_b_trace_bound(d);
  return out;
}

}  // namespace lpiopt
