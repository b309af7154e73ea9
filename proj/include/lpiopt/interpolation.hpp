#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lpiopt/kernels.hpp"
#include "lpiopt/multiindex.hpp"

namespace lpiopt {

/// Default bound on m^d; the LPIOPT_CAP_GRID environment variable overrides it.
inline constexpr std::uint64_t kDefaultGridCap = 10'000'000;

/// Effective grid cap (environment override if set and parseable).
std::uint64_t grid_cap();

/// m^d, or nullopt when it does not fit in 64 bits.
std::optional<std::uint64_t> checked_pow(std::uint64_t m, int d);

/// The virtual grid {u in [0,1]^d : u_i m in {1..m}}, enumerated row-major
/// (first axis slowest). Points are computed on demand from their linear index.
class UniformGrid {
 public:
  UniformGrid(int m, int d, std::uint64_t size);

  int points_per_axis() const { return m_; }
  int dim() const { return d_; }
  std::uint64_t size() const { return size_; }

  /// Coordinates k_j / m of point `index`.
  void point(std::uint64_t index, std::span<double> out) const;
  std::vector<double> point(std::uint64_t index) const;

  /// Linear index of the point with per-axis steps k_j in {1..m}.
  std::uint64_t index_of(std::span<const int> steps) const;

  /// Materialized list of all points (size() x d).
  std::vector<std::vector<double>> points() const;

 private:
  int m_;
  int d_;
  std::uint64_t size_;
};

/// Throws ResourceError naming m^d when it exceeds `cap`.
UniformGrid uniform_grid(int m, int d, std::uint64_t cap = grid_cap());

struct InterpConfig {
  int m = 0;
  double h = 0.0;
  int l = 0;
  Kernel kernel = boxcar_kernel();
  double solve_tolerance = 1e12;  // largest accepted condition number of B(x)

  /// Throws std::invalid_argument unless 0 < h < 1/2, m >= 1, l >= 0.
  void validate() const;
};

/// Interpolation weights w*_y(x) for a single query point x. Only grid points
/// inside the kernel window are stored; all others carry weight zero.
struct LocalFit {
  std::vector<double> x;
  int m = 0;                                                // grid the weights refer to
  int d = 0;
  std::vector<std::pair<std::uint64_t, double>> weights;  // (grid index, weight), ascending index
  std::size_t active_count = 0;
  double condition = 0.0;   // lambda_max / lambda_min of B(x)
  double lambda_min = 0.0;  // smallest eigenvalue of B(x)

  double weight_sum() const;
  double weight_l1() const;
};

/// B(x) = (mh)^{-d} sum_y U((y-x)/h) U((y-x)/h)^T prod_j K((y_j-x_j)/h).
/// Throws DomainError if x is outside [h, 1-h]^d.
Eigen::MatrixXd b_matrix(const InterpConfig& cfg, const UniformGrid& grid, std::span<const double> x);

/// Weights from the first row of B(x)^{-1}. Throws DomainError for x outside
/// [h, 1-h]^d and IllPosedFitError when B(x) is singular or its condition
/// number exceeds cfg.solve_tolerance.
LocalFit local_fit(const InterpConfig& cfg, const UniformGrid& grid, std::span<const double> x);

/// sum_y values[y] w*_y(x). `values` covers the whole grid in linear-index order.
double interpolate(const LocalFit& fit, std::span<const double> grid_values);

/// Sparse variant; throws InputError if an active grid point has no value.
double interpolate(const LocalFit& fit, const std::unordered_map<std::uint64_t, double>& values);

/// Evaluates g at the active grid points and combines them.
double interpolate(const LocalFit& fit, const std::function<double(std::span<const double>)>& g);

/// sum_y (y - x)^s w*_y(x); vanishes for 1 <= |s| <= l on a well-posed fit.
double weight_moment(const LocalFit& fit, const MultiIndex& s);

/// max over probes of |interpolate(fit(x), g) - g(x)|.
double sup_error(const std::function<LocalFit(std::span<const double>)>& fit_factory,
                 const std::function<double(std::span<const double>)>& g,
                 const std::vector<std::vector<double>>& probe_points);

/// Deterministic text form: one "index weight" line per active point, 17 significant digits.
std::string serialize(const LocalFit& fit);

/// Constants of the Hoelder class and kernel entering the theoretical (m, h).
struct TheoryConstants {
  double L2 = 1.0;
  double b = 1.0;
  double c = 1.0;
};

struct TheoryGridSize {
  double log10_m = 0.0;
  std::optional<std::uint64_t> m;  // set when m fits in 53 bits
  bool infeasible = false;         // m^d exceeds the grid cap
  bool theorem_regime = false;     // eta > l >= d >= 19
};

/// m = ceil(110 (2 L2 + 1) (c/b) d (3e)^d Lambda(d,l)^{-2} delta^{-1/eta}), evaluated in log-space.
TheoryGridSize theory_grid_size(double delta, int d, int l, double eta, const TheoryConstants& k,
                                std::uint64_t cap = grid_cap());

struct TheoryBandwidth {
  double log_h = 0.0;        // natural log of 4 l (3e)^d / (m Lambda(d,l))
  double h = 0.0;            // exp(log_h), may be +inf
  double log_h_prime = 0.0;  // natural log of 2b/(55(2L2+1)c) * Lambda(d,l) l / d
  bool practical_mode_required = false;  // h >= 1/2
};

TheoryBandwidth theory_bandwidth(std::uint64_t m, int d, int l, const TheoryConstants& k = {});

/// Same, for grids whose size is only known through log(m).
TheoryBandwidth theory_bandwidth_log(double log_m, int d, int l, const TheoryConstants& k = {});

}  // namespace lpiopt
