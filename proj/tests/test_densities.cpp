#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kdebias/densities.hpp"
#include "test_util.hpp"

using namespace kdebias;

namespace {

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

double pdf_at(const DensityModel& m, std::vector<double> x) { return m.pdf(x); }

// Probabilists' Hermite polynomials, written out.
double hermite(int j, double x) {
  const double x2 = x * x;
  switch (j) {
    case 0: return 1;
    case 1: return x;
    case 2: return x2 - 1;
    case 3: return x * (x2 - 3);
    case 4: return x2 * x2 - 6 * x2 + 3;
    case 5: return x * (x2 * x2 - 10 * x2 + 15);
    case 6: return x2 * x2 * x2 - 15 * x2 * x2 + 45 * x2 - 15;
    case 7: return x * (x2 * x2 * x2 - 21 * x2 * x2 + 105 * x2 - 105);
    case 8: return x2 * x2 * x2 * x2 - 28 * x2 * x2 * x2 + 210 * x2 * x2 - 420 * x2 + 105;
  }
  return 0;
}

DensityModel mixture2d() {
  Matrix s1(2, {1.0, 0.3, 0.3, 0.5});
  Matrix s2(2, {0.4, -0.1, -0.1, 0.9});
  return DensityModel::gaussian_mixture({{0.7, {0.2, -0.1}, s1}, {0.3, {-1.0, 0.8}, s2}});
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Densities, PdfExamples) {
  EXPECT_NEAR(pdf_at(DensityModel::standard_gaussian(1), {0.0}), 0.3989422804, 1e-10);
  const auto m = DensityModel::gaussian_mixture({{0.5, {-1.0}, Matrix::identity(1)}, {0.5, {1.0}, Matrix::identity(1)}});
  EXPECT_NEAR(pdf_at(m, {0.0}), kInvSqrt2Pi * std::exp(-0.5), 1e-15);
  EXPECT_NEAR(pdf_at(m, {0.0}), 0.2420, 1e-4);
  const auto g2 = mixture2d();
  for (std::vector<double> x : {std::vector<double>{0.0, 0.0}, {1.2, -0.7}, {-2.0, 3.0}}) {
    const double oracle = 0.7 * testutil::gauss_pdf(x, {0.2, -0.1}, Matrix(2, {1.0, 0.3, 0.3, 0.5})) +
                          0.3 * testutil::gauss_pdf(x, {-1.0, 0.8}, Matrix(2, {0.4, -0.1, -0.1, 0.9}));
    EXPECT_NEAR(g2.pdf(x), oracle, 1e-14 * oracle);
  }
}

TEST(Densities, FarMassKeepsInnerDensity) {
  const auto a = DensityModel::far_mass({1.0}, 2.0, 0.1);
  const auto b = DensityModel::far_mass({-1.0}, 1.3, 0.05);
  EXPECT_EQ(pdf_at(a, {0.3}), pdf_at(b, {0.3}));
  EXPECT_NEAR(a.far().far_center[0], 2.05, 1e-15);

  const auto m = DensityModel::far_mass({1.0, 1.0}, 1.05, 0.05);
  // f0 = a N(0, I) on the unit ball; a fixed by inner mass 1/2 = a (1 - e^{-1/2})
  const double amp = 0.5 / (1.0 - std::exp(-0.5));
  for (int i = 0; i < 10; ++i)
    for (int k = 0; k < 10; ++k) {
      std::vector<double> x{-0.7 + 0.15 * i, -0.7 + 0.15 * k};
      if (dot(x, x) > 1.0) continue;
      EXPECT_NEAR(m.pdf(x), amp * testutil::gauss_pdf(x, {0, 0}, Matrix::identity(2)), 1e-14);
    }
  // nothing between the ball and the far bump
  EXPECT_EQ(pdf_at(m, {0.72, 0.72}), 0.0);
  EXPECT_EQ(pdf_at(m, {-1.2, 0.0}), 0.0);
  EXPECT_GT(pdf_at(m, {1.075 / std::sqrt(2.0), 1.075 / std::sqrt(2.0)}), 0.0);
}

TEST(Densities, FarMassTotalMass) {
  const auto m = DensityModel::far_mass({1.0}, 1.05, 0.05);
  const double inner = testutil::simpson([&](double x) { return pdf_at(m, {x}); }, -1.0, 1.0, 4000);
  const double c = m.far().far_center[0], w = m.far().far_ball_radius;
  const double far = testutil::simpson([&](double x) { return pdf_at(m, {x}); }, c - w, c + w, 4000);
  EXPECT_NEAR(inner, 0.5, 1e-10);
  EXPECT_NEAR(far, 0.5, 1e-10);
}

TEST(Densities, DerivativeExamples) {
  const auto g = DensityModel::standard_gaussian(1);
  const std::vector<double> zero{0.0};
  EXPECT_NEAR(g.deriv_tensor(zero, 1).data()[0], 0.0, 1e-16);
  EXPECT_NEAR(g.deriv_tensor(zero, 2).data()[0], -kInvSqrt2Pi, 1e-15);
  const auto m = mixture2d();
  const std::vector<double> x{0.4, 0.1};
  EXPECT_EQ(m.deriv_tensor(x, 0).data()[0], m.pdf(x));
}

TEST(Densities, DerivativeMatchesHermiteOracle) {
  // along a line x + t v a Gaussian is c' exp(-c (t - t0)^2 / 2) with
  // c = v'Pv, so D^j f(x)(v,...,v) = f(x) (-1)^j c^(j/2) He_j(b / sqrt c), b = v'P(x - mu)
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n;
  for (std::size_t d = 1; d <= 3; ++d) {
    const Matrix s = testutil::random_spd(d, rng, 0.3);
    std::vector<double> mu(d);
    for (auto& v : mu) v = n(rng);
    const auto m = DensityModel::gaussian_mixture({{1.0, mu, s}});
    const Matrix p = testutil::inv_small(s);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> x(d), v(d);
      for (auto& e : x) e = n(rng);
      for (auto& e : v) e = n(rng);
      double c = 0.0, b = 0.0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k) {
          c += v[i] * p(i, k) * v[k];
          b += v[i] * p(i, k) * (x[k] - mu[k]);
        }
      const double f = m.pdf(x);
      for (int j = 0; j <= 8; ++j) {
        const double oracle = f * (j % 2 ? -1.0 : 1.0) * std::pow(c, 0.5 * j) * hermite(j, b / std::sqrt(c));
        const double got = m.deriv_tensor(x, j).contract(v);
        EXPECT_NEAR(got, oracle, 1e-9 * (std::abs(oracle) + f * std::pow(c, 0.5 * j)))
            << "d=" << d << " j=" << j;
      }
    }
  }
}

TEST(Densities, DerivativeTensorsAreSymmetric) {
  const auto m = mixture2d();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2, 2);
  const auto m3 = DensityModel::gaussian_mixture({{1.0, {0.1, 0.2, -0.3}, Matrix(3, {1, .2, .1, .2, .8, -.3, .1, -.3, 1.5})}});
  for (const DensityModel* model : {&m, &m3}) {
    const std::size_t d = model->dim();
    for (int trial = 0; trial < 4; ++trial) {
      std::vector<double> x(d);
      for (auto& e : x) e = u(rng);
      for (int j = 2; j <= 4; ++j) {
        const SymTensor t = model->deriv_tensor(x, j);
        const double scale = *std::max_element(t.data().begin(), t.data().end(),
                                               [](double a, double b) { return std::abs(a) < std::abs(b); });
        for (std::size_t f = 0; f < t.data().size(); ++f) {
          std::vector<int> idx(j);
          std::size_t r = f;
          for (int k = j - 1; k >= 0; --k) {
            idx[k] = static_cast<int>(r % d);
            r /= d;
          }
          std::vector<int> perm = idx;
          std::sort(perm.begin(), perm.end());
          do {
            EXPECT_NEAR(t.at(perm), t.at(idx), 1e-13 * std::abs(scale));
          } while (std::next_permutation(perm.begin(), perm.end()));
        }
      }
    }
  }
}

TEST(Densities, SecondDerivativeMatchesFiniteDifferences) {
  const auto m = mixture2d();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x{n(rng), n(rng)}, v{n(rng), n(rng)};
    const double nv = norm2(v);
    for (auto& e : v) e /= nv;
    const double step = 1e-4;
    std::vector<double> xp{x[0] + step * v[0], x[1] + step * v[1]}, xm{x[0] - step * v[0], x[1] - step * v[1]};
    const double fd = (m.pdf(xp) - 2 * m.pdf(x) + m.pdf(xm)) / (step * step);
    const double an = m.deriv_tensor(x, 2).contract(v);
    EXPECT_NEAR(fd, an, 1e-5 * std::max(std::abs(an), m.pdf(x)));
  }
}

TEST(Densities, FarMassDerivatives) {
  const auto m = DensityModel::far_mass({1.0, 0.0}, 1.05, 0.05, 0.5, 0.7);
  const std::vector<double> x{0.2, -0.3};
  const double amp = m.far().inner_amplitude;
  EXPECT_NEAR(m.deriv_tensor(x, 2).contract(std::vector<double>{1.0, 0.0}),
              amp * (0.2 * 0.2 / 0.49 - 1.0) / 0.49 * testutil::gauss_pdf(x, {0, 0}, Matrix::diagonal(std::vector<double>{0.49, 0.49})), 1e-13);
  EXPECT_EQ(m.deriv_tensor(std::vector<double>{0.0, 1.5}, 3).data()[0], 0.0);
  EXPECT_EQ(code_of([&] { m.deriv_tensor(std::vector<double>{1.07, 0.0}, 1); }), ErrorCode::OrderUnavailable);
}

TEST(Densities, DerivSupNormExamples) {
  const auto g = DensityModel::standard_gaussian(1);
  const std::vector<double> zero{0.0};
  double scan = 0.0;
  for (int i = -5000; i <= 5000; ++i) {
    const double x = 0.1 * i / 5000.0;
    scan = std::max(scan, std::abs((x * x - 1) * testutil::phi(x)));
  }
  EXPECT_NEAR(deriv_grid_max(g, zero, 0.1, 2), scan, 1e-12);
  EXPECT_NEAR(deriv_grid_max(g, zero, 0.1, 2), 0.39894, 1e-5);
  EXPECT_NEAR(deriv_sup_norm(g, zero, 0.1, 2), 1.05 * scan, 1e-12);
  EXPECT_EQ(deriv_sup_norm(g, zero, 0.0, 2), std::abs(g.deriv_tensor(zero, 2).data()[0]));
}

TEST(Densities, DerivSupNormMonotone) {
  const auto m = mixture2d();
  const std::vector<double> x{0.3, 0.2};
  for (int j : {1, 2, 3}) {
    double prev = 0.0;
    for (double delta : {0.0, 0.1, 0.2, 0.4, 0.8, 1.6}) {
      const double b = deriv_grid_max(m, x, delta, j);
      EXPECT_GE(b, prev * (1 - 1e-12)) << "j=" << j << " delta=" << delta;
      prev = b;
    }
  }
  // interior maximum of f''' near 0.7 lies inside both balls
  const auto g = DensityModel::standard_gaussian(1);
  EXPECT_LE(deriv_grid_max(g, std::vector<double>{0.7}, 0.25, 3), deriv_grid_max(g, std::vector<double>{0.7}, 0.5, 3));
}

TEST(Densities, OperatorNormAgainstAngleScan) {
  const auto m = mixture2d();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x{u(rng), u(rng)};
    for (int j : {2, 3, 4, 5}) {
      const SymTensor t = m.deriv_tensor(x, j);
      double scan = 0.0;
      for (int a = 0; a < 20000; ++a) {
        const double th = std::numbers::pi * a / 20000.0;
        scan = std::max(scan, std::abs(t.contract(std::vector<double>{std::cos(th), std::sin(th)})));
      }
      const double got = operator_norm(t, 7);
      EXPECT_LE(got, scan * (1 + 1e-6)) << j;
      EXPECT_GE(got, scan * (1 - 1e-6)) << j;
    }
  }
}

TEST(Densities, SamplingIsDeterministic) {
  const auto m = mixture2d();
  const SampleSet a = sample(m, 500, 99), b = sample(m, 500, 99), c = sample(m, 500, 100);
  EXPECT_EQ(a.data(), b.data());
  EXPECT_NE(a.data(), c.data());
  EXPECT_EQ(a.source_seed().value(), 99u);
  const auto f = DensityModel::far_mass({0.0, 1.0});
  EXPECT_EQ(sample(f, 300, 5).data(), sample(f, 300, 5).data());
}

TEST(Densities, SampleMomentsMatchModel) {
  const std::size_t n = 100000;
  const SampleSet s = sample(DensityModel::standard_gaussian(1), n, 12345);
  double mean = 0.0;
  for (double v : s.data()) mean += v;
  mean /= static_cast<double>(n);
  EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(static_cast<double>(n)));

  // mixture: component mean 0.7 (0.2, -0.1) + 0.3 (-1, 0.8) = (-0.16, 0.17)
  const SampleSet t = sample(mixture2d(), n, 7);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += t.point(i)[0];
    my += t.point(i)[1];
  }
  EXPECT_NEAR(mx / n, -0.16, 5.0 * 1.1 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(my / n, 0.17, 5.0 * 1.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Densities, FarMassSamplesSplitByMass) {
  const auto m = DensityModel::far_mass({1.0, 0.0}, 1.05, 0.05, 0.3);
  const std::size_t n = 40000;
  const SampleSet s = sample(m, n, 3);
  std::size_t far = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = s.point(i);
    const double r = norm2(p);
    if (r > 1.0) {
      ++far;
      EXPECT_GE(r, 1.05);
      EXPECT_LE(r, 1.1 + 1e-12);
    }
  }
  const double frac = static_cast<double>(far) / n;
  EXPECT_NEAR(frac, 0.7, 4.0 * std::sqrt(0.21 / n));
}

TEST(Densities, Errors) {
  EXPECT_EQ(code_of([] { sample(DensityModel::standard_gaussian(1), 0, 1); }), ErrorCode::EmptySamples);
  EXPECT_EQ(code_of([] { pdf_at(DensityModel::standard_gaussian(2), {0.0}); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([] { DensityModel::standard_gaussian(1).deriv_tensor(std::vector<double>{0.0}, 9); }),
            ErrorCode::OrderUnavailable);
  EXPECT_EQ(code_of([] { DensityModel::gaussian_mixture({{0.6, {0.0}, Matrix::identity(1)}, {0.6, {1.0}, Matrix::identity(1)}}); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { DensityModel::gaussian_mixture({{1.0, {0.0, 0.0}, Matrix(2, {1, 2, 2, 1})}}); }),
            ErrorCode::NotPositiveDefinite);
  EXPECT_EQ(code_of([] { DensityModel::gaussian_mixture({{1.0, {0.0, 0.0}, Matrix(2, {1, 0.2, 0.1, 1})}}); }),
            ErrorCode::NotSymmetric);
  EXPECT_EQ(code_of([] { DensityModel::far_mass_at({0.5}, 0.1); }), ErrorCode::InvalidArgument);
}
