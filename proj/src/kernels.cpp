#include "lpiopt/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lpiopt {

Kernel::Kernel(std::string name, std::function<double(double)> profile, double b, double c)
    : name_(std::move(name)), profile_(std::move(profile)), b_(b), c_(c) {
  if (!(b_ > 0.0) || !(c_ >= b_)) {
    throw std::invalid_argument("kernel '" + name_ + "': need 0 < b <= c");
  }
  constexpr int kSamples = 4001;
  for (int i = 0; i < kSamples; ++i) {
    const double t = -1.0 + 2.0 * i / (kSamples - 1);
    const double v = profile_(t);
    if (!(v >= b_ && v <= c_)) {
      throw std::invalid_argument("kernel '" + name_ + "' leaves [b, c] at t = " + std::to_string(t));
    }
  }
}

Kernel boxcar_kernel() {
  return Kernel("boxcar", [](double) { return 1.0; }, 1.0, 1.0);
}

Kernel raised_cosine_kernel() {
  return Kernel(
      "raised-cosine", [](double t) { return 1.0 + 0.5 * std::cos(std::numbers::pi * t); }, 0.5, 1.5);
}

Kernel kernel_by_name(const std::string& name) {
  if (name == "boxcar") return boxcar_kernel();
  if (name == "raised-cosine") return raised_cosine_kernel();
  throw std::invalid_argument("unknown kernel '" + name + "' (expected boxcar | raised-cosine)");
}

double product_kernel(const Kernel& k, std::span<const double> x, std::span<const double> y, double h) {
  if (x.size() != y.size()) throw std::invalid_argument("product_kernel: dimension mismatch");
  if (!(h > 0.0)) throw std::invalid_argument("product_kernel: bandwidth must be positive");
  double w = 1.0;
  for (size_t j = 0; j < x.size(); ++j) {
    w *= k((y[j] - x[j]) / h);
    if (w == 0.0) break;
  }
  return w;
}

}  // namespace lpiopt
