#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "kdebias/error.hpp"
#include "kdebias/linalg.hpp"

namespace kdebias {

/// Symmetric positive-definite bandwidth matrix h with its spectral data cached.
/// Immutable after construction.
class BandwidthMatrix {
 public:
  static constexpr double kSymmetryTol = 1e-12;
  static constexpr double kEigenFloor = 1e-14;

  /// Validates symmetry (relative 1e-12 on the largest asymmetric entry),
  /// symmetrizes, and caches determinant, inverse and the descending spectrum.
  static BandwidthMatrix make(const Matrix& entries) {
    const std::size_t d = entries.size();
    detail::require(d >= 1, ErrorCode::DimensionMismatch, "bandwidth must be at least 1x1");
    const double scale = entries.max_abs();
    detail::require(scale > 0.0, ErrorCode::NotPositiveDefinite, "zero bandwidth matrix");
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j)
        if (std::abs(entries(i, j) - entries(j, i)) > kSymmetryTol * scale)
          throw Error(ErrorCode::NotSymmetric, "bandwidth entry asymmetry exceeds 1e-12 relative");

    Matrix sym(d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) sym(i, j) = 0.5 * (entries(i, j) + entries(j, i));

    BandwidthMatrix h;
    h.entries_ = sym;
    const SymmetricEigen eig = jacobi_eigen(sym);
    if (!(eig.values.back() > kEigenFloor))
      throw Error(ErrorCode::NotPositiveDefinite, "smallest eigenvalue below floor 1e-14");
    h.eigenvalues_ = eig.values;
    h.eigenvectors_ = eig.vectors;

    const Matrix chol = cholesky(sym);
    h.det_ = std::exp(cholesky_log_det(chol));
    h.inverse_ = cholesky_inverse(chol);
    return h;
  }

  static BandwidthMatrix make(const std::vector<std::vector<double>>& rows) {
    const std::size_t d = rows.size();
    std::vector<double> flat;
    flat.reserve(d * d);
    for (const auto& r : rows) {
      detail::require(r.size() == d, ErrorCode::DimensionMismatch, "bandwidth rows must be square");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return make(Matrix(d, std::move(flat)));
  }

  static BandwidthMatrix scalar(std::size_t d, double eps) {
    return make(Matrix::diagonal(std::vector<double>(d, eps)));
  }

  static BandwidthMatrix diagonal(std::span<const double> diag) {
    return make(Matrix::diagonal(diag));
  }

  std::size_t dim() const noexcept { return entries_.size(); }
  const Matrix& entries() const noexcept { return entries_; }
  const Matrix& inverse() const noexcept { return inverse_; }
  double det() const noexcept { return det_; }
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }
  const Matrix& eigenvectors() const noexcept { return eigenvectors_; }
  /// Spectral norm; equals the largest eigenvalue for SPD h.
  double op_norm() const noexcept { return eigenvalues_.front(); }
  double min_eigenvalue() const noexcept { return eigenvalues_.back(); }

  Vector top_eigenvector() const {
    Vector v(dim());
    for (std::size_t r = 0; r < dim(); ++r) v[r] = eigenvectors_(r, 0);
    return v;
  }

  Vector apply(std::span<const double> v) const { return entries_.apply(v); }
  Vector apply_inverse(std::span<const double> v) const { return inverse_.apply(v); }

 private:
  BandwidthMatrix() = default;

  Matrix entries_;
  Matrix inverse_;
  double det_ = 1.0;
  Vector eigenvalues_;
  Matrix eigenvectors_;
};

/// ||h||^d / |h|; at least 1, bounded iff the eigenvalues are of comparable size.
inline double balance_ratio(const BandwidthMatrix& h) {
  const auto& ev = h.eigenvalues();
  double r = 1.0;
  for (double lam : ev) r *= ev.front() / lam;
  return r;
}

/// |h| / ||h||^d, at most 1 by Hadamard's inequality.
inline double hadamard_ratio(const BandwidthMatrix& h) {
  const auto& ev = h.eigenvalues();
  double r = 1.0;
  for (double lam : ev) r *= lam / ev.front();
  return r;
}

}  // namespace kdebias
