#pragma once

// Small dense linear algebra for d x d matrices with d <= 10. Row-major storage.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "kdebias/error.hpp"

namespace kdebias {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), a_(n * n, fill) {}
  Matrix(std::size_t n, std::vector<double> row_major) : n_(n), a_(std::move(row_major)) {
    detail::require(a_.size() == n_ * n_, ErrorCode::DimensionMismatch,
                    "matrix storage does not match dimension");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> diag) {
    Matrix m(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
  }

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  const std::vector<double>& data() const noexcept { return a_; }

  Matrix transposed() const {
    Matrix t(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    detail::require(a.n_ == b.n_, ErrorCode::DimensionMismatch, "matrix product");
    Matrix c(a.n_);
    for (std::size_t i = 0; i < a.n_; ++i)
      for (std::size_t k = 0; k < a.n_; ++k) {
        const double aik = a(i, k);
        for (std::size_t j = 0; j < a.n_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  Vector apply(std::span<const double> v) const {
    detail::require(v.size() == n_, ErrorCode::DimensionMismatch, "matrix-vector product");
    Vector out(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n_; ++j) s += (*this)(i, j) * v[j];
      out[i] = s;
    }
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : a_) m = std::max(m, std::abs(x));
    return m;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

struct SymmetricEigen {
  Vector values;  // descending
  Matrix vectors; // column i is the eigenvector of values[i]
};

/// Cyclic Jacobi eigensolver for a symmetric matrix. Iterates until the
/// off-diagonal Frobenius norm drops below `tol` times the matrix Frobenius norm.
inline SymmetricEigen jacobi_eigen(const Matrix& input, double tol = 1e-13, int max_sweeps = 100) {
  const std::size_t n = input.size();
  Matrix a = input;
  Matrix v = Matrix::identity(n);

  double total = 0.0;
  for (double x : a.data()) total += x * x;
  const double scale = std::sqrt(total);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < max_sweeps && scale > 0.0; ++sweep) {
    if (off_norm() <= tol * scale) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymmetricEigen out{Vector(n), Matrix(n)};
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

/// Lower-triangular Cholesky factor. Throws NotPositiveDefinite on a non-positive pivot.
inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.size();
  Matrix l(n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    detail::require(d > 0.0, ErrorCode::NotPositiveDefinite, "non-positive Cholesky pivot");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

/// Solves L L^T x = b given the Cholesky factor L.
inline Vector cholesky_solve(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.size();
  Vector y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) y[i] -= l(i, k) * y[k];
    y[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) y[i] -= l(k, i) * y[k];
    y[i] /= l(i, i);
  }
  return y;
}

inline Matrix cholesky_inverse(const Matrix& l) {
  const std::size_t n = l.size();
  Matrix inv(n);
  Vector e(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    std::fill(e.begin(), e.end(), 0.0);
    e[c] = 1.0;
    const Vector col = cholesky_solve(l, e);
    for (std::size_t r = 0; r < n; ++r) inv(r, c) = col[r];
  }
  // exact symmetry
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double m = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = m;
      inv(j, i) = m;
    }
  return inv;
}

inline double cholesky_log_det(const Matrix& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

}  // namespace kdebias
