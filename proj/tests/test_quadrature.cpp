#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kdebias/kernels.hpp"
#include "kdebias/quadrature.hpp"
#include "test_util.hpp"

using namespace kdebias;

TEST(Quadrature, ConstantOverUnitSquare) {
  const auto r = integrate([](std::span<const double>) { return 1.0; }, RegionSpec::box({0, 0}, {1, 1}),
                           QuadOptions::for_dim(2));
  EXPECT_NEAR(r.value, 1.0, 1e-12);
  EXPECT_TRUE(r.converged);
}

TEST(Quadrature, GaussianNormalization) {
  const auto r = integrate_interval([](double x) { return testutil::phi(x); }, -8.0, 8.0, QuadOptions{});
  EXPECT_NEAR(r.value, 1.0, 1e-10);
  EXPECT_TRUE(r.converged);
}

TEST(Quadrature, PolynomialOnUnitInterval) {
  const auto r = integrate_interval([](double x) { return x * x; }, 0.0, 1.0, QuadOptions{});
  EXPECT_NEAR(r.value, 1.0 / 3.0, 1e-12);
}

TEST(Quadrature, ReversedIntervalChangesSign) {
  const auto r = integrate_interval([](double x) { return x; }, 1.0, 0.0, QuadOptions{});
  EXPECT_NEAR(r.value, -0.5, 1e-14);
}

TEST(Quadrature, GaussLegendreExactness) {
  for (int m = 1; m <= 24; ++m) {
    const auto& g = gauss_legendre(m);
    for (int deg = 0; deg <= 2 * m - 1; ++deg) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += g.w[i] * std::pow(g.x[i], deg);
      const double exact = deg % 2 ? 0.0 : 2.0 / (deg + 1);
      EXPECT_NEAR(s, exact, 1e-13) << "m=" << m << " deg=" << deg;
    }
  }
}

TEST(Quadrature, BallAndAnnulusVolumes) {
  auto one = [](std::span<const double>) { return 1.0; };
  EXPECT_NEAR(integrate(one, RegionSpec::ball({0.3}, 2.0), QuadOptions{}).value, 4.0, 1e-12);
  EXPECT_NEAR(integrate(one, RegionSpec::ball({1, 2}, 1.0), QuadOptions::for_dim(2)).value, std::numbers::pi, 1e-10);
  EXPECT_NEAR(integrate(one, RegionSpec::ball({0, 0, 0}, 1.0), QuadOptions::for_dim(3)).value,
              4.0 * std::numbers::pi / 3.0, 1e-8);
  EXPECT_NEAR(integrate(one, RegionSpec::annulus({0, 0}, 1.0, 2.0), QuadOptions::for_dim(2)).value,
              3.0 * std::numbers::pi, 1e-10);
}

TEST(Quadrature, RegionAdditivity) {
  auto g = [](std::span<const double> x) { return std::exp(-0.5 * (x[0] * x[0] + 2 * x[1] * x[1] + x[0] * x[1])); };
  QuadOptions opt = QuadOptions::for_dim(2);
  opt.rel_tol = 1e-10;
  const double inner = integrate(g, RegionSpec::ball({0.1, 0}, 0.4), opt).value;
  const double shell = integrate(g, RegionSpec::annulus({0.1, 0}, 0.4, 3.0), opt).value;
  const double whole = integrate(g, RegionSpec::ball({0.1, 0}, 3.0), opt).value;
  EXPECT_NEAR(inner + shell, whole, 1e-8 * whole);
}

TEST(Quadrature, Linearity) {
  auto f = [](double x) { return std::sin(3 * x); };
  auto g = [](double x) { return std::exp(-x * x); };
  const QuadOptions opt;
  const auto rf = integrate_interval(f, -1, 2, opt), rg = integrate_interval(g, -1, 2, opt);
  const auto rs = integrate_interval([&](double x) { return 2.5 * f(x) - 0.7 * g(x); }, -1, 2, opt);
  EXPECT_NEAR(rs.value, 2.5 * rf.value - 0.7 * rg.value,
              2.5 * rf.error_estimate + 0.7 * rg.error_estimate + rs.error_estimate + 1e-14);
}

TEST(Quadrature, ThreeDimensionalGaussianBox) {
  auto f = [](std::span<const double> x) {
    return testutil::phi(x[0]) * testutil::phi(x[1], 0.5) * testutil::phi(x[2], 2.0);
  };
  const auto r = integrate_box(f, std::vector<double>{-9, -5, -17}, std::vector<double>{9, 5, 17}, QuadOptions::for_dim(3));
  EXPECT_NEAR(r.value, 1.0, 1e-6);
  EXPECT_TRUE(r.converged);
}

TEST(Quadrature, NonConvergenceIsReported) {
  QuadOptions opt;
  opt.max_regions = 4;
  const auto r = integrate_interval([](double x) { return x < 0.3137 ? 0.0 : 1.0; }, 0.0, 1.0, opt);
  EXPECT_FALSE(r.converged);
  EXPECT_GT(r.nodes_used, 0u);
}

TEST(Quadrature, NarrowBumpNeedsBreakpoints) {
  // a bump of half-width 1e-7 at 0.37: with its support as breakpoints the
  // rule recovers w * int bump exactly
  const double c = 0.37, w = 1e-7;
  auto f = [&](double x) { return bump((x - c) / w); };
  QuadOptions opt;
  opt.rel_tol = 1e-13;
  opt.abs_tol = 0.0;
  const auto r = integrate_interval(f, 0.0, 1.0, opt, {c - w, c, c + w});
  EXPECT_NEAR(r.value, w * testutil::kBumpIntegral, 1e-11 * w);
}

TEST(Quadrature, RadialExamples) {
  const QuadOptions opt;
  auto gauss1 = [](double r) { return testutil::phi(r); };
  EXPECT_NEAR(integrate_radial(gauss1, 1, 0, {8.0}, opt).value, 1.0, 1e-10);
  EXPECT_NEAR(integrate_radial([](double r) { return r <= 1.0 ? 1.0 : 0.0; }, 2, 0, {1.0}, opt).value,
              std::numbers::pi, 1e-12);
  // E|Z|^2 = 3 for Z ~ N(0, I_3)
  auto gauss3 = [](double r) { return std::exp(-0.5 * r * r) / std::pow(2 * std::numbers::pi, 1.5); };
  EXPECT_NEAR(integrate_radial(gauss3, 3, 2, {2.0}, opt).value, 3.0, 1e-9);
}

TEST(Quadrature, RadialTailDoublingExtendsTruncation) {
  // truncation at 1 is far too short; doubling must extend it
  auto f = [](double r) { return std::exp(-r); };
  EXPECT_NEAR(integrate_radial(f, 1, 0, {1.0}, QuadOptions{}).value, 2.0, 1e-8);
}

TEST(Quadrature, RadialDivergenceThrows) {
  try {
    integrate_radial([](double r) { return 1.0 / (1.0 + r); }, 1, 0, {1.0}, QuadOptions{});
    FAIL() << "expected MomentDiverged";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MomentDiverged);
  }
}

TEST(Quadrature, RadialSegmentsSumSpikes) {
  // two unit-height bumps of half-width 0.1 at r = 2 and 3 in d = 1
  std::vector<RadialSegment> segs{{2.0, 0.1}, {3.0, 0.1}};
  auto local = [](double, double o) { return bump(o / 0.1); };
  const auto r = integrate_radial_segments(local, 1, 0, segs, QuadOptions{});
  EXPECT_NEAR(r.value, 2.0 * 2.0 * 0.1 * testutil::kBumpIntegral, 1e-12);
}

TEST(Quadrature, SphereArea) {
  EXPECT_NEAR(sphere_area(1), 2.0, 1e-15);
  EXPECT_NEAR(sphere_area(2), 2 * std::numbers::pi, 1e-14);
  EXPECT_NEAR(sphere_area(3), 4 * std::numbers::pi, 1e-14);
}

TEST(Quadrature, RejectsBadInput) {
  EXPECT_THROW(RegionSpec::ball({0, 0}, 0.0), Error);
  EXPECT_THROW(RegionSpec::box({0, 1}, {1, 1}), Error);
  auto one = [](std::span<const double>) { return 1.0; };
  EXPECT_THROW(integrate(one, RegionSpec::ball({0, 0, 0, 0}, 1.0), QuadOptions{}), Error);
}

TEST(Quadrature, ConvergedMeansWithinTolerance) {
  auto f = [](std::span<const double> x) { return std::exp(std::sin(5 * x[0]) + x[1] * x[1]); };
  for (double rel : {1e-4, 1e-8, 1e-11}) {
    QuadOptions opt = QuadOptions::for_dim(2);
    opt.rel_tol = rel;
    const auto r = integrate_box(f, std::vector<double>{0, -1}, std::vector<double>{2, 1}, opt);
    ASSERT_TRUE(r.converged);
    EXPECT_LE(r.error_estimate, opt.target(r.value));
    EXPECT_GE(r.error_estimate, 0.0);
  }
}
