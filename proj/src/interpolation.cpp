#include "lpiopt/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "lpiopt/errors.hpp"
#include "lpiopt/spectra.hpp"

namespace lpiopt {

std::uint64_t grid_cap() {
  if (const char* env = std::getenv("LPIOPT_CAP_GRID")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::uint64_t>(v);
  }
  return kDefaultGridCap;
}

std::optional<std::uint64_t> checked_pow(std::uint64_t m, int d) {
  std::uint64_t r = 1;
  for (int i = 0; i < d; ++i) {
    if (m != 0 && r > std::numeric_limits<std::uint64_t>::max() / m) return std::nullopt;
    r *= m;
  }
  return r;
}

UniformGrid::UniformGrid(int m, int d, std::uint64_t size) : m_(m), d_(d), size_(size) {}

void UniformGrid::point(std::uint64_t index, std::span<double> out) const {
  for (int j = d_ - 1; j >= 0; --j) {
    const auto step = static_cast<int>(index % static_cast<std::uint64_t>(m_)) + 1;
    index /= static_cast<std::uint64_t>(m_);
    out[static_cast<size_t>(j)] = static_cast<double>(step) / m_;
  }
}

std::vector<double> UniformGrid::point(std::uint64_t index) const {
  std::vector<double> out(static_cast<size_t>(d_));
  point(index, out);
  return out;
}

std::uint64_t UniformGrid::index_of(std::span<const int> steps) const {
  std::uint64_t idx = 0;
  for (int j = 0; j < d_; ++j) {
    idx = idx * static_cast<std::uint64_t>(m_) + static_cast<std::uint64_t>(steps[static_cast<size_t>(j)] - 1);
  }
  return idx;
}

std::vector<std::vector<double>> UniformGrid::points() const {
  std::vector<std::vector<double>> out;
  out.reserve(size_);
  for (std::uint64_t i = 0; i < size_; ++i) out.push_back(point(i));
  return out;
}

UniformGrid uniform_grid(int m, int d, std::uint64_t cap) {
  if (m < 1 || d < 1) throw std::invalid_argument("uniform_grid: need m >= 1 and d >= 1");
  const auto size = checked_pow(static_cast<std::uint64_t>(m), d);
  if (!size || *size > cap) {
    throw ResourceError(fmt::format("grid m^d = {}^{} = {} exceeds cap {}", m, d,
                                    size ? std::to_string(*size) : std::string("overflow"), cap));
  }
  return UniformGrid(m, d, *size);
}

void InterpConfig::validate() const {
  if (m < 1) throw std::invalid_argument("interp config: m must be >= 1");
  if (!(h > 0.0 && h < 0.5)) throw std::invalid_argument("interp config: h must lie in (0, 1/2)");
  if (l < 0) throw std::invalid_argument("interp config: l must be >= 0");
  if (!(solve_tolerance > 1.0)) throw std::invalid_argument("interp config: solve_tolerance must exceed 1");
}

double LocalFit::weight_sum() const {
  double s = 0.0;
  for (const auto& [idx, w] : weights) s += w;
  return s;
}

double LocalFit::weight_l1() const {
  double s = 0.0;
  for (const auto& [idx, w] : weights) s += std::abs(w);
  return s;
}

namespace {

void check_domain(const InterpConfig& cfg, const UniformGrid& grid, std::span<const double> x) {
  if (static_cast<int>(x.size()) != grid.dim()) throw std::invalid_argument("query point has wrong dimension");
  if (cfg.m != grid.points_per_axis()) throw std::invalid_argument("config m does not match grid");
  const double lo = cfg.h;
  const double hi = 1.0 - cfg.h;
  for (size_t j = 0; j < x.size(); ++j) {
    if (!(x[j] >= lo && x[j] <= hi)) {
      throw DomainError(fmt::format("query coordinate x[{}] = {} outside [h, 1-h] = [{}, {}]", j, x[j], lo, hi));
    }
  }
}

// Grid points with nonzero kernel weight around x, as (linear index, scaled offset z, kernel weight).
struct Window {
  std::vector<std::uint64_t> index;
  std::vector<double> z;  // row-major, d entries per point
  std::vector<double> kernel;
};

Window window_points(const InterpConfig& cfg, const UniformGrid& grid, std::span<const double> x) {
  const int d = grid.dim();
  const int m = grid.points_per_axis();
  std::vector<std::vector<int>> steps(static_cast<size_t>(d));
  std::vector<std::vector<double>> offsets(static_cast<size_t>(d));
  std::vector<std::vector<double>> weights(static_cast<size_t>(d));
  for (int j = 0; j < d; ++j) {
    const double xj = x[static_cast<size_t>(j)];
    const int lo = std::max(1, static_cast<int>(std::floor((xj - cfg.h) * m)) - 1);
    const int hi = std::min(m, static_cast<int>(std::ceil((xj + cfg.h) * m)) + 1);
    for (int k = lo; k <= hi; ++k) {
      const double t = (static_cast<double>(k) / m - xj) / cfg.h;
      const double kv = cfg.kernel(t);
      if (kv > 0.0) {
        steps[static_cast<size_t>(j)].push_back(k);
        offsets[static_cast<size_t>(j)].push_back(t);
        weights[static_cast<size_t>(j)].push_back(kv);
      }
    }
  }
  Window w;
  std::size_t total = 1;
  for (const auto& s : steps) total *= s.size();
  if (total == 0) return w;
  w.index.reserve(total);
  w.z.reserve(total * static_cast<size_t>(d));
  w.kernel.reserve(total);
  // Odometer over the per-axis candidate lists, last axis fastest, so indices ascend.
  std::vector<size_t> pos(static_cast<size_t>(d), 0);
  std::vector<int> cur(static_cast<size_t>(d));
  while (true) {
    double kv = 1.0;
    for (int j = 0; j < d; ++j) {
      const size_t p = pos[static_cast<size_t>(j)];
      cur[static_cast<size_t>(j)] = steps[static_cast<size_t>(j)][p];
      w.z.push_back(offsets[static_cast<size_t>(j)][p]);
      kv *= weights[static_cast<size_t>(j)][p];
    }
    w.index.push_back(grid.index_of(cur));
    w.kernel.push_back(kv);
    int j = d - 1;
    while (j >= 0) {
      if (++pos[static_cast<size_t>(j)] < steps[static_cast<size_t>(j)].size()) break;
      pos[static_cast<size_t>(j)] = 0;
      --j;
    }
    if (j < 0) break;
  }
  return w;
}

Eigen::MatrixXd accumulate_b(const InterpConfig& cfg, const BasisLayout& layout, const Window& w, int d) {
  const int n = layout.size();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd u(n);
  for (size_t i = 0; i < w.index.size(); ++i) {
    u_vector_into(layout, std::span<const double>(w.z.data() + i * static_cast<size_t>(d), static_cast<size_t>(d)), u);
    b.selfadjointView<Eigen::Lower>().rankUpdate(u, w.kernel[i]);
  }
  b = b.selfadjointView<Eigen::Lower>();
  b /= std::pow(cfg.m * cfg.h, d);
  return b;
}

}  // namespace

Eigen::MatrixXd b_matrix(const InterpConfig& cfg, const UniformGrid& grid, std::span<const double> x) {
  cfg.validate();
  check_domain(cfg, grid, x);
  const BasisLayout layout(grid.dim(), cfg.l);
  return accumulate_b(cfg, layout, window_points(cfg, grid, x), grid.dim());
}

LocalFit local_fit(const InterpConfig& cfg, const UniformGrid& grid, std::span<const double> x) {
  cfg.validate();
  check_domain(cfg, grid, x);
  const int d = grid.dim();
  const BasisLayout layout(d, cfg.l);
  const Window w = window_points(cfg, grid, x);
  const Eigen::MatrixXd b = accumulate_b(cfg, layout, w, d);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues()(0);
  const double lmax = eig.eigenvalues()(layout.size() - 1);
  const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(lmin > 0.0) || cond > cfg.solve_tolerance) {
    throw IllPosedFitError(fmt::format("B(x) is ill-posed: {} window points for D = {}, lambda_min = {:.3e}, "
                                       "condition = {:.3e}",
                                       w.index.size(), layout.size(), lmin, cond),
                           lmin, cond);
  }

  // w*_y = (mh)^{-d} K_y e_0^T B^{-1} U(z_y); B is symmetric so solve once for B^{-1} e_0.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(b);
  const Eigen::VectorXd row = ldlt.solve(Eigen::VectorXd::Unit(layout.size(), 0));
  const double scale = 1.0 / std::pow(cfg.m * cfg.h, d);

  LocalFit fit;
  fit.x.assign(x.begin(), x.end());
  fit.m = cfg.m;
  fit.d = d;
  fit.condition = cond;
  fit.lambda_min = lmin;
  fit.weights.reserve(w.index.size());
  Eigen::VectorXd u(layout.size());
  for (size_t i = 0; i < w.index.size(); ++i) {
    u_vector_into(layout, std::span<const double>(w.z.data() + i * static_cast<size_t>(d), static_cast<size_t>(d)), u);
    fit.weights.emplace_back(w.index[i], scale * w.kernel[i] * row.dot(u));
  }
  fit.active_count = fit.weights.size();
  return fit;
}

double interpolate(const LocalFit& fit, std::span<const double> grid_values) {
  const auto expected = checked_pow(static_cast<std::uint64_t>(fit.m), fit.d);
  if (!expected || grid_values.size() != *expected) {
    throw InputError(fmt::format("interpolate: expected {} grid values, got {}",
                                 expected ? *expected : 0, grid_values.size()));
  }
  double acc = 0.0;
  for (const auto& [idx, w] : fit.weights) acc += grid_values[idx] * w;
  return acc;
}

double interpolate(const LocalFit& fit, const std::unordered_map<std::uint64_t, double>& values) {
  double acc = 0.0;
  for (const auto& [idx, w] : fit.weights) {
    const auto it = values.find(idx);
    if (it == values.end()) throw InputError(fmt::format("interpolate: no value at active grid point {}", idx));
    acc += it->second * w;
  }
  return acc;
}

double interpolate(const LocalFit& fit, const std::function<double(std::span<const double>)>& g) {
  const UniformGrid grid(fit.m, fit.d, 0);
  std::vector<double> y(static_cast<size_t>(fit.d));
  double acc = 0.0;
  for (const auto& [idx, w] : fit.weights) {
    grid.point(idx, y);
    acc += g(y) * w;
  }
  return acc;
}

double weight_moment(const LocalFit& fit, const MultiIndex& s) {
  const UniformGrid grid(fit.m, fit.d, 0);
  std::vector<double> y(static_cast<size_t>(fit.d));
  double acc = 0.0;
  for (const auto& [idx, w] : fit.weights) {
    grid.point(idx, y);
    for (int j = 0; j < fit.d; ++j) y[static_cast<size_t>(j)] -= fit.x[static_cast<size_t>(j)];
    acc += monomial(s, y) * w;
  }
  return acc;
}

double sup_error(const std::function<LocalFit(std::span<const double>)>& fit_factory,
                 const std::function<double(std::span<const double>)>& g,
                 const std::vector<std::vector<double>>& probe_points) {
  double worst = 0.0;
  for (const auto& x : probe_points) {
    const LocalFit fit = fit_factory(x);
    worst = std::max(worst, std::abs(interpolate(fit, g) - g(x)));
  }
  return worst;
}

std::string serialize(const LocalFit& fit) {
  std::string out;
  for (const auto& [idx, w] : fit.weights) out += fmt::format("{} {:.17g}\n", idx, w);
  return out;
}

namespace {

double log_three_e() { return std::log(3.0) + 1.0; }

}  // namespace

TheoryGridSize theory_grid_size(double delta, int d, int l, double eta, const TheoryConstants& k,
                                std::uint64_t cap) {
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("theory_grid_size: delta must lie in (0, 1]");
  if (!(eta > 0.0)) throw std::invalid_argument("theory_grid_size: eta must be positive");
  const double log_lambda = lambda_log(d, l).log_value;
  const double log_m = std::log(110.0 * (2.0 * k.L2 + 1.0) * k.c / k.b) + std::log(static_cast<double>(d)) +
                       d * log_three_e() - 2.0 * log_lambda - std::log(delta) / eta;
  TheoryGridSize out;
  out.theorem_regime = eta > l && l >= d && d >= 19;
  constexpr double kLogMaxExact = 53.0 * std::numbers::ln2;
  if (log_m < kLogMaxExact) {
    const double m = std::ceil(std::exp(log_m));
    out.m = static_cast<std::uint64_t>(m);
    out.log10_m = std::log10(m);
  } else {
    out.log10_m = log_m / std::numbers::ln10;
  }
  out.infeasible = d * out.log10_m > std::log10(static_cast<double>(cap));
  return out;
}

TheoryBandwidth theory_bandwidth_log(double log_m, int d, int l, const TheoryConstants& k) {
  if (l < 1) throw std::invalid_argument("theory_bandwidth: need l >= 1");
  const double log_lambda = lambda_log(d, l).log_value;
  TheoryBandwidth out;
  out.log_h = std::log(4.0 * l) + d * log_three_e() - log_m - log_lambda;
  out.h = std::exp(out.log_h);
  out.log_h_prime = std::log(2.0 * k.b / (55.0 * (2.0 * k.L2 + 1.0) * k.c)) + log_lambda +
                    std::log(static_cast<double>(l) / d);
  out.practical_mode_required = out.log_h >= std::log(0.5);
  return out;
}

TheoryBandwidth theory_bandwidth(std::uint64_t m, int d, int l, const TheoryConstants& k) {
  if (m < 1) throw std::invalid_argument("theory_bandwidth: need m >= 1");
  return theory_bandwidth_log(std::log(static_cast<double>(m)), d, l, k);
}

}  // namespace lpiopt
