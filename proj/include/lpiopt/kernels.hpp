#pragma once

#include <functional>
#include <span>
#include <string>

namespace lpiopt {

/// Compactly supported kernel K: R -> [0, c] with b <= K(t) <= c on the closed
/// interval [-1, 1] and K(t) = 0 outside it.
class Kernel {
 public:
  /// Validates the profile against [b, c] on a dense sample of [-1, 1];
  /// throws std::invalid_argument on violation or when !(0 < b <= c).
  Kernel(std::string name, std::function<double(double)> profile, double b, double c);

  double operator()(double t) const {
    if (t < -1.0 || t > 1.0) return 0.0;
    return profile_(t);
  }

  const std::string& name() const { return name_; }
  double lower() const { return b_; }
  double upper() const { return c_; }

 private:
  std::string name_;
  std::function<double(double)> profile_;
  double b_;
  double c_;
};

/// K = 1 on [-1, 1]; b = c = 1.
Kernel boxcar_kernel();

/// K(t) = 1 + cos(pi t) / 2, so b = 0.5 at |t| = 1 and c = 1.5 at t = 0.
Kernel raised_cosine_kernel();

/// Lookup by CLI name: "boxcar" | "raised-cosine".
Kernel kernel_by_name(const std::string& name);

/// prod_j K((y_j - x_j) / h).
double product_kernel(const Kernel& k, std::span<const double> x, std::span<const double> y, double h);

}  // namespace lpiopt
