#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kdebias/bandwidth.hpp"
#include "test_util.hpp"

using namespace kdebias;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Bandwidth, Identity) {
  const auto h = BandwidthMatrix::make(Matrix::identity(2));
  EXPECT_DOUBLE_EQ(h.det(), 1.0);
  EXPECT_NEAR(h.eigenvalues()[0], 1.0, 1e-15);
  EXPECT_NEAR(h.eigenvalues()[1], 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(h.op_norm(), 1.0);
}

TEST(Bandwidth, Diagonal) {
  const double d[] = {0.25, 0.5};
  const auto h = BandwidthMatrix::diagonal(d);
  EXPECT_NEAR(h.det(), 0.125, 1e-15);
  EXPECT_DOUBLE_EQ(h.eigenvalues()[0], 0.5);
  EXPECT_DOUBLE_EQ(h.eigenvalues()[1], 0.25);
  EXPECT_DOUBLE_EQ(h.op_norm(), 0.5);
}

TEST(Bandwidth, TwoByTwoCharacteristicPolynomial) {
  const auto h = BandwidthMatrix::make({{2.0, 1.0}, {1.0, 2.0}});
  EXPECT_NEAR(h.eigenvalues()[0], 3.0, 1e-13);
  EXPECT_NEAR(h.eigenvalues()[1], 1.0, 1e-13);
  EXPECT_NEAR(h.det(), 3.0, 1e-13);
}

TEST(Bandwidth, ThreeByThreeAgainstTrigonometricRoots) {
  // closed-form roots of the characteristic cubic of a symmetric 3x3 matrix
  const Matrix a(3, {4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0});
  const double q = (a(0, 0) + a(1, 1) + a(2, 2)) / 3.0;
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  const double p2 = std::pow(a(0, 0) - q, 2) + std::pow(a(1, 1) - q, 2) + std::pow(a(2, 2) - q, 2) + 2 * p1;
  const double p = std::sqrt(p2 / 6.0);
  Matrix b(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b(i, j) = (a(i, j) - (i == j ? q : 0.0)) / p;
  const double r = std::clamp(testutil::det_small(b) / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double e1 = q + 2 * p * std::cos(phi);
  const double e3 = q + 2 * p * std::cos(phi + 2 * std::numbers::pi / 3);
  const double e2 = 3 * q - e1 - e3;

  const auto h = BandwidthMatrix::make(a);
  EXPECT_NEAR(h.eigenvalues()[0], e1, 1e-12);
  EXPECT_NEAR(h.eigenvalues()[1], e2, 1e-12);
  EXPECT_NEAR(h.eigenvalues()[2], e3, 1e-12);
  EXPECT_NEAR(h.det(), testutil::det_small(a), 1e-12);
}

TEST(Bandwidth, RejectsAsymmetric) {
  EXPECT_EQ(code_of([] { BandwidthMatrix::make({{1.0, 0.5}, {0.4, 1.0}}); }), ErrorCode::NotSymmetric);
}

TEST(Bandwidth, AcceptsTinyAsymmetryAndSymmetrizes) {
  const auto h = BandwidthMatrix::make({{1.0, 0.5}, {0.5 + 1e-14, 1.0}});
  EXPECT_EQ(h.entries()(0, 1), h.entries()(1, 0));
}

TEST(Bandwidth, RejectsIndefiniteAndTiny) {
  EXPECT_EQ(code_of([] { BandwidthMatrix::make({{1.0, 2.0}, {2.0, 1.0}}); }), ErrorCode::NotPositiveDefinite);
  EXPECT_EQ(code_of([] { BandwidthMatrix::make({{1.0, 0.0}, {0.0, 1e-15}}); }), ErrorCode::NotPositiveDefinite);
  EXPECT_EQ(code_of([] { BandwidthMatrix::make(std::vector<std::vector<double>>{{0.0}}); }), ErrorCode::NotPositiveDefinite);
  EXPECT_EQ(code_of([] { BandwidthMatrix::make({{1.0, 0.0}}); }), ErrorCode::DimensionMismatch);
}

TEST(Bandwidth, BalanceRatioExamples) {
  EXPECT_DOUBLE_EQ(balance_ratio(BandwidthMatrix::scalar(2, 0.37)), 1.0);
  for (double eps : {0.1, 0.01}) {
    const double d[] = {eps, eps * eps};
    EXPECT_NEAR(balance_ratio(BandwidthMatrix::diagonal(d)), 1.0 / eps, 1e-9 / eps);
  }
}

TEST(Bandwidth, HadamardRatioExamples) {
  EXPECT_DOUBLE_EQ(hadamard_ratio(BandwidthMatrix::make(Matrix::identity(3))), 1.0);
  const double d[] = {1.0, 0.1};
  EXPECT_NEAR(hadamard_ratio(BandwidthMatrix::diagonal(d)), 0.1, 1e-15);
}

TEST(Bandwidth, ApplyExamples) {
  const double d[] = {2.0, 4.0};
  const auto h = BandwidthMatrix::diagonal(d);
  const double v[] = {1.0, 1.0};
  const Vector hv = h.apply(v);
  EXPECT_DOUBLE_EQ(hv[0], 2.0);
  EXPECT_DOUBLE_EQ(hv[1], 4.0);
  const auto id = BandwidthMatrix::make(Matrix::identity(2));
  const double w[] = {0.3, -1.7};
  EXPECT_EQ(id.apply(w), Vector(std::begin(w), std::end(w)));
}

TEST(Bandwidth, RandomSpdInvariants) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  for (int t = 0; t < 200; ++t) {
    const std::size_t d = 1 + static_cast<std::size_t>(t % 5);
    const Matrix a = testutil::random_spd(d, rng);
    const auto h = BandwidthMatrix::make(a);

    double prod = 1.0;
    for (double l : h.eigenvalues()) prod *= l;
    EXPECT_NEAR(h.det(), prod, 1e-10 * prod);
    for (std::size_t i = 1; i < d; ++i) EXPECT_GE(h.eigenvalues()[i - 1], h.eigenvalues()[i]);

    const Matrix id = h.inverse() * h.entries();
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(id(i, j), i == j ? 1.0 : 0.0, 1e-10);

    const auto hinv = BandwidthMatrix::make(h.inverse());
    EXPECT_NEAR(hinv.det() * h.det(), 1.0, 1e-10);

    Vector v(d);
    for (auto& x : v) x = n(rng);
    const Vector back = h.apply_inverse(h.apply(v));
    for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(back[i], v[i], 1e-10 * (1.0 + std::abs(v[i])));

    EXPECT_LE(hadamard_ratio(h), 1.0 + 1e-12);
    EXPECT_GE(balance_ratio(h), 1.0 - 1e-12);
    EXPECT_NEAR(balance_ratio(h) * hadamard_ratio(h), 1.0, 1e-10);
    // Hadamard's inequality proper: det <= product of the diagonal
    double diag = 1.0;
    for (std::size_t i = 0; i < d; ++i) diag *= a(i, i);
    EXPECT_LE(h.det(), diag * (1.0 + 1e-12));
  }
}

TEST(Bandwidth, DimensionMismatchOnApply) {
  const auto h = BandwidthMatrix::make(Matrix::identity(2));
  const double v[] = {1.0, 2.0, 3.0};
  EXPECT_THROW(h.apply(v), Error);
}
