#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace lpiopt {

/// Exponent tuple s in Z_+^d. Comparison is lexicographic on the entries.
class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> entries);

  int dim() const { return static_cast<int>(entries_.size()); }
  int order() const;  // |s|
  int operator[](int j) const { return entries_[static_cast<size_t>(j)]; }
  const std::vector<int>& entries() const { return entries_; }

  /// s! = s_1! ... s_d!, exact. Throws std::overflow_error if any s_j > 20.
  std::uint64_t factorial() const;

  bool is_zero() const;

  friend auto operator<=>(const MultiIndex&, const MultiIndex&) = default;
  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

 private:
  std::vector<int> entries_;
};

/// Exact n! for n <= 20.
std::uint64_t exact_factorial(int n);

/// Exact binomial coefficient; throws std::overflow_error past 64 bits.
std::uint64_t binomial(int n, int k);

/// All multi-indices with |s| <= l in ascending lexicographic order.
/// The all-zeros index always sits at position 0.
class BasisLayout {
 public:
  BasisLayout(int d, int l);

  int dim() const { return d_; }
  int order() const { return l_; }
  int size() const { return static_cast<int>(indices_.size()); }
  const MultiIndex& operator[](int i) const { return indices_[static_cast<size_t>(i)]; }
  const std::vector<MultiIndex>& indices() const { return indices_; }

  /// Position of s in the layout, or -1 when |s| > l or dims differ.
  int position(const MultiIndex& s) const;

 private:
  int d_;
  int l_;
  std::vector<MultiIndex> indices_;
  std::vector<double> inv_factorials_;

  friend void u_vector_into(const BasisLayout&, std::span<const double>, Eigen::Ref<Eigen::VectorXd>);
};

BasisLayout multi_index_set(int d, int l);

/// u^s = prod_j u_j^{s_j}; 1 for s = 0.
double monomial(const MultiIndex& s, std::span<const double> u);

/// U(u) = [u^s / s!]_s in layout order.
Eigen::VectorXd u_vector(const BasisLayout& layout, std::span<const double> u);

/// Allocation-free variant of u_vector for inner loops; out must have layout.size() rows.
void u_vector_into(const BasisLayout& layout, std::span<const double> u,
                   Eigen::Ref<Eigen::VectorXd> out);

}  // namespace lpiopt
