#include "lpiopt/multiindex.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lpiopt {

MultiIndex::MultiIndex(std::vector<int> entries) : entries_(std::move(entries)) {
  for (int e : entries_) {
    if (e < 0) throw std::invalid_argument("multi-index entries must be non-negative");
  }
}

int MultiIndex::order() const { return std::accumulate(entries_.begin(), entries_.end(), 0); }

std::uint64_t MultiIndex::factorial() const {
  std::uint64_t f = 1;
  for (int e : entries_) f *= exact_factorial(e);
  return f;
}

bool MultiIndex::is_zero() const {
  return std::all_of(entries_.begin(), entries_.end(), [](int e) { return e == 0; });
}

std::uint64_t exact_factorial(int n) {
  if (n < 0) throw std::invalid_argument("factorial of negative number");
  if (n > 20) throw std::overflow_error("factorial " + std::to_string(n) + "! exceeds 64 bits");
  std::uint64_t f = 1;
  for (int k = 2; k <= n; ++k) f *= static_cast<std::uint64_t>(k);
  return f;
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (int i = 1; i <= k; ++i) {
    // result * (n - k + i) / i stays exact because result = C(n-k+i-1, i-1).
    const std::uint64_t num = static_cast<std::uint64_t>(n - k + i);
    if (result > std::numeric_limits<std::uint64_t>::max() / num) {
      throw std::overflow_error("binomial coefficient exceeds 64 bits");
    }
    result = result * num / static_cast<std::uint64_t>(i);
  }
  return result;
}

namespace {

// Recursively fill entries[pos..] with every tail of total at most budget,
// iterating each coordinate upward so the output is lexicographically sorted.
void enumerate(std::vector<int>& entries, size_t pos, int budget, std::vector<MultiIndex>& out) {
  if (pos == entries.size()) {
    out.emplace_back(entries);
    return;
  }
  for (int k = 0; k <= budget; ++k) {
    entries[pos] = k;
    enumerate(entries, pos + 1, budget - k, out);
  }
  entries[pos] = 0;
}

}  // namespace

BasisLayout::BasisLayout(int d, int l) : d_(d), l_(l) {
  if (d < 1) throw std::invalid_argument("basis dimension d must be >= 1");
  if (l < 0) throw std::invalid_argument("basis order l must be >= 0");
  if (l > 20) throw std::overflow_error("basis order l > 20 overflows exact factorials");
  std::vector<int> entries(static_cast<size_t>(d), 0);
  indices_.reserve(static_cast<size_t>(binomial(l + d, d)));
  enumerate(entries, 0, l, indices_);
  inv_factorials_.reserve(indices_.size());
  for (const auto& s : indices_) inv_factorials_.push_back(1.0 / static_cast<double>(s.factorial()));
}

int BasisLayout::position(const MultiIndex& s) const {
  if (s.dim() != d_ || s.order() > l_) return -1;
  auto it = std::lower_bound(indices_.begin(), indices_.end(), s);
  if (it == indices_.end() || *it != s) return -1;
  return static_cast<int>(it - indices_.begin());
}

BasisLayout multi_index_set(int d, int l) { return BasisLayout(d, l); }

double monomial(const MultiIndex& s, std::span<const double> u) {
  if (static_cast<int>(u.size()) != s.dim()) throw std::invalid_argument("monomial: dimension mismatch");
  double v = 1.0;
  for (int j = 0; j < s.dim(); ++j) {
    for (int k = 0; k < s[j]; ++k) v *= u[static_cast<size_t>(j)];
  }
  return v;
}

void u_vector_into(const BasisLayout& layout, std::span<const double> u,
                   Eigen::Ref<Eigen::VectorXd> out) {
  const int d = layout.d_;
  const int l = layout.l_;
  if (static_cast<int>(u.size()) != d) throw std::invalid_argument("u_vector: dimension mismatch");
  // powers(j, k) = u_j^k
  thread_local Eigen::MatrixXd powers;
  powers.resize(d, l + 1);
  for (int j = 0; j < d; ++j) {
    powers(j, 0) = 1.0;
    for (int k = 1; k <= l; ++k) powers(j, k) = powers(j, k - 1) * u[static_cast<size_t>(j)];
  }
  for (int i = 0; i < layout.size(); ++i) {
    const auto& s = layout.indices_[static_cast<size_t>(i)];
    double v = layout.inv_factorials_[static_cast<size_t>(i)];
    for (int j = 0; j < d; ++j) v *= powers(j, s[j]);
    out[i] = v;
  }
}

Eigen::VectorXd u_vector(const BasisLayout& layout, std::span<const double> u) {
  Eigen::VectorXd out(layout.size());
  u_vector_into(layout, u, out);
  return out;
}

}  // namespace lpiopt
