#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <boost/multiprecision/cpp_int.hpp>

#include "lpiopt/multiindex.hpp"

namespace lpiopt {

using Rational = boost::multiprecision::cpp_rational;

/// Largest basis size for which the integral matrix is built exactly.
inline constexpr int kScriptBCap = 2000;
/// Largest basis size for which determinants are taken in exact arithmetic.
inline constexpr int kExactDetCap = 30;

/// Entry (r, s) of the integral matrix int_{[-1,1]^d} U(u) U(u)^T du:
/// zero if any r_j + s_j is odd, else 2^d / (r! s!) prod_j 1/(r_j + s_j + 1).
Rational script_b_entry(const MultiIndex& r, const MultiIndex& s);

/// The integral matrix in layout order, exact.
class ScriptB {
 public:
  ScriptB(int d, int l);

  int dim() const { return layout_.dim(); }
  int order() const { return layout_.order(); }
  int size() const { return layout_.size(); }
  const BasisLayout& layout() const { return layout_; }
  const Rational& operator()(int i, int j) const {
    return entries_[static_cast<size_t>(i) * static_cast<size_t>(size()) + static_cast<size_t>(j)];
  }

  Eigen::MatrixXd to_double() const;

 private:
  BasisLayout layout_;
  std::vector<Rational> entries_;
};

/// Throws ResourceError when D exceeds kScriptBCap.
ScriptB script_b_matrix(int d, int l);

/// Orthonormal Legendre polynomial L_k on [-1, 1] (int L_j L_k = 1{j = k}),
/// via the three-term recurrence.
double legendre(int k, double t);

/// prod_j L_{r_j}(u_j).
double legendre_product(const MultiIndex& r, std::span<const double> u);

/// Diagonal entry R_{s,s} of the lower-triangular factor with U = R L:
/// 2^{|s|} 2^{d/2} / s! * prod_j (2 s_j + 1)^{-1/2} C(2 s_j, s_j)^{-1}.
double cholesky_diagonal(const MultiIndex& s);

/// R_{s,s}^2 as an exact rational.
Rational cholesky_diagonal_squared(const MultiIndex& s);

/// Exact determinant of a symmetric rational matrix by Gaussian elimination.
Rational exact_determinant(const ScriptB& b);

struct DetIdentityReport {
  int D = 0;
  std::optional<Rational> det_exact;           // D <= kExactDetCap
  std::optional<Rational> det_cholesky_exact;  // product of R_{s,s}^2
  bool exact_match = false;
  double log_det_direct = 0.0;    // floating Cholesky of the integral matrix
  double log_det_cholesky = 0.0;  // sum_s log R_{s,s}^2
  double relative_gap = 0.0;      // |det_direct / det_cholesky - 1|
};

DetIdentityReport det_identity_check(int d, int l);

struct LogLambda {
  int d = 0;
  int l = 0;
  double log_value = 0.0;       // natural log of Lambda(d, l)
  bool theorem_regime = false;  // l >= d >= 19
};

/// log Lambda(d,l) = d D' log(pi d / (8 e^2)) + (D'-1) log(D'-1) - 3 l E log(l + d),
/// with D' = ((l+d)/d)^d and E = (e (l+d)/d)^d. Requires d >= 1 and l >= 1.
LogLambda lambda_log(int d, int l);

struct MinEigReport {
  double lambda_min = 0.0;
  std::optional<double> log_lambda_bound;  // defined for l >= 1
  bool bound_applicable = false;           // l >= d >= 19
  bool bound_holds = false;                // only meaningful if bound_applicable
};

MinEigReport min_eig_report(int d, int l);

/// tr of the integral matrix and the (2e)^d bound.
double script_b_trace(int d, int l);
double script_b_trace_bound(int d);

/// Everything the `spectra-check` subcommand emits.
struct SpectraSummary {
  int d = 0;
  int l = 0;
  int D = 0;
  double lambda_min = 0.0;
  std::optional<double> log_lambda;
  double det_gap = 0.0;
  double trace = 0.0;
  double trace_bound = 0.0;
};

SpectraSummary spectra_check(int d, int l);

}  // namespace lpiopt
