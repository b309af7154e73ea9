#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lpiopt/kernels.hpp"

using lpiopt::Kernel;

TEST(Boxcar, ValuesAndClosedSupport) {
  const Kernel k = lpiopt::boxcar_kernel();
  EXPECT_EQ(k(0.0), 1.0);
  EXPECT_EQ(k(1.0), 1.0);
  EXPECT_EQ(k(-1.0), 1.0);
  EXPECT_EQ(k(1.0000001), 0.0);
  EXPECT_EQ(k(-0.6), 1.0);
  EXPECT_EQ(k.lower(), 1.0);
  EXPECT_EQ(k.upper(), 1.0);
}

TEST(RaisedCosine, BoundsAndSupport) {
  const Kernel k = lpiopt::raised_cosine_kernel();
  EXPECT_DOUBLE_EQ(k(0.0), 1.5);
  EXPECT_DOUBLE_EQ(k(1.0), 0.5);
  EXPECT_DOUBLE_EQ(k(-1.0), 0.5);
  EXPECT_EQ(k(1.01), 0.0);
  EXPECT_EQ(k.lower(), 0.5);
  EXPECT_EQ(k.upper(), 1.5);
  for (int i = 0; i <= 10000; ++i) {
    const double t = -1.0 + 2.0 * i / 10000.0;
    EXPECT_GE(k(t), k.lower());
    EXPECT_LE(k(t), k.upper());
  }
}

TEST(ProductKernel, Examples) {
  const Kernel k = lpiopt::boxcar_kernel();
  EXPECT_EQ(lpiopt::product_kernel(k, std::vector<double>{0.5}, std::vector<double>{0.75}, 0.5), 1.0);
  EXPECT_EQ(lpiopt::product_kernel(k, std::vector<double>{0.5}, std::vector<double>{1.0}, 0.25), 0.0);
  EXPECT_EQ(lpiopt::product_kernel(k, std::vector<double>{0.5, 0.5}, std::vector<double>{0.6, 0.9}, 0.5), 1.0);
}

TEST(ProductKernel, EqualsProductOfOneDimensionalValues) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const Kernel& k : {lpiopt::boxcar_kernel(), lpiopt::raised_cosine_kernel()}) {
    for (int trial = 0; trial < 2000; ++trial) {
      const int d = 1 + trial % 3;
      const double h = 0.05 + 0.4 * unit(rng);
      std::vector<double> x(static_cast<size_t>(d)), y(static_cast<size_t>(d));
      double expected = 1.0;
      for (int j = 0; j < d; ++j) {
        x[static_cast<size_t>(j)] = unit(rng);
        y[static_cast<size_t>(j)] = unit(rng);
        expected *= k((y[static_cast<size_t>(j)] - x[static_cast<size_t>(j)]) / h);
      }
      const double v = lpiopt::product_kernel(k, x, y, h);
      EXPECT_EQ(v, expected);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, std::pow(k.upper(), d));
    }
  }
}

TEST(KernelConstruction, RejectsInvalidBounds) {
  EXPECT_THROW(Kernel("bad", [](double) { return 1.0; }, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(Kernel("bad", [](double) { return 1.0; }, 2.0, 1.0), std::invalid_argument);
  // Profile dips below b near the edge.
  EXPECT_THROW(Kernel("bad", [](double t) { return 1.0 - t * t; }, 0.5, 1.0), std::invalid_argument);
}

TEST(KernelLookup, ByName) {
  EXPECT_EQ(lpiopt::kernel_by_name("boxcar").name(), "boxcar");
  EXPECT_EQ(lpiopt::kernel_by_name("raised-cosine").name(), "raised-cosine");
  EXPECT_THROW(lpiopt::kernel_by_name("gaussian"), std::invalid_argument);
}
