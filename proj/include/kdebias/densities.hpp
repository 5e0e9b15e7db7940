#pragma once

// Target densities with analytic derivative tensors: Gaussian mixtures and the
// far-mass family (fixed behaviour on the unit ball, free mass outside it).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "kdebias/error.hpp"
#include "kdebias/kernels.hpp"
#include "kdebias/linalg.hpp"
#include "kdebias/quadrature.hpp"
#include "kdebias/sample_set.hpp"

namespace kdebias {

/// Full (non-packed) storage of an order-j tensor on R^d; entry for index tuple
/// (i_0, ..., i_{j-1}) lives at sum_k i_k d^(j-1-k).
class SymTensor {
 public:
  SymTensor(std::size_t dim, int order) : dim_(dim), order_(order), data_(ipow(dim, order), 0.0) {}

  std::size_t dim() const noexcept { return dim_; }
  int order() const noexcept { return order_; }
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  double at(std::span<const int> idx) const {
    std::size_t t = 0;
    for (int i : idx) t = t * dim_ + static_cast<std::size_t>(i);
    return data_[t];
  }

  /// T(v, ..., v)
  double contract(std::span<const double> v) const {
    double s = 0.0;
    for (std::size_t t = 0; t < data_.size(); ++t) {
      double p = data_[t];
      std::size_t r = t;
      for (int k = 0; k < order_; ++k) {
        p *= v[r % dim_];
        r /= dim_;
      }
      s += p;
    }
    return s;
  }

  /// T(v, ..., v, .) as a vector (last slot free).
  Vector contract_partial(std::span<const double> v) const {
    Vector out(dim_, 0.0);
    for (std::size_t t = 0; t < data_.size(); ++t) {
      double p = data_[t];
      std::size_t r = t;
      const std::size_t last = r % dim_;
      r /= dim_;
      for (int k = 1; k < order_; ++k) {
        p *= v[r % dim_];
        r /= dim_;
      }
      out[last] += p;
    }
    return out;
  }

  static std::size_t ipow(std::size_t b, int e) {
    std::size_t r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
  }

 private:
  std::size_t dim_;
  int order_;
  std::vector<double> data_;
};

/// Operator norm sup_{|v|=1} |T(v,...,v)|. Exact for order <= 2 or d = 1; for
/// higher orders the maximum over 64 seeded random unit directions, polished
/// by symmetric power iterations.
inline double operator_norm(const SymTensor& t, std::uint64_t seed = 0) {
  const std::size_t d = t.dim();
  const int j = t.order();
  if (j == 0) return std::abs(t.data()[0]);
  if (d == 1) return std::abs(t.data()[0]);
  if (j == 1) return norm2(t.data());
  if (j == 2) {
    const SymmetricEigen e = jacobi_eigen(Matrix(d, t.data()));
    return std::max(std::abs(e.values.front()), std::abs(e.values.back()));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double best = 0.0;
  Vector best_v(d, 0.0);
  Vector v(d);
  for (int k = 0; k < 64; ++k) {
    for (auto& x : v) x = normal(rng);
    const double nv = norm2(v);
    for (auto& x : v) x /= nv;
    const double val = std::abs(t.contract(v));
    if (val > best) {
      best = val;
      best_v = v;
    }
  }
  // shifted symmetric power iteration: monotone ascent for a large enough shift
  double shift = 0.0;
  for (double x : t.data()) shift += std::abs(x);
  shift *= static_cast<double>(j - 1);
  const double s = t.contract(best_v) < 0.0 ? -1.0 : 1.0;
  v = best_v;
  for (int it = 0; it < 2000; ++it) {
    Vector g = t.contract_partial(v);
    for (std::size_t i = 0; i < d; ++i) g[i] = s * g[i] + shift * v[i];
    const double ng = norm2(g);
    if (!(ng > 0.0)) break;
    double moved = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      moved = std::max(moved, std::abs(g[i] / ng - v[i]));
      v[i] = g[i] / ng;
    }
    best = std::max(best, std::abs(t.contract(v)));
    if (moved < 1e-12) break;
  }
  return best;
}

/// Weighted Gaussian component with cached factorizations.
class GaussianComponent {
 public:
  GaussianComponent(double weight, Vector mean, const Matrix& cov)
      : weight_(weight), mean_(std::move(mean)), cov_(cov) {
    detail::require(cov_.size() == mean_.size() && !mean_.empty(), ErrorCode::DimensionMismatch,
                    "component mean/covariance dimension");
    detail::require(weight_ > 0.0, ErrorCode::InvalidArgument, "mixture weights must be positive");
    const double scale = cov_.max_abs();
    for (std::size_t i = 0; i < cov_.size(); ++i)
      for (std::size_t k = i + 1; k < cov_.size(); ++k)
        if (std::abs(cov_(i, k) - cov_(k, i)) > 1e-12 * scale)
          throw Error(ErrorCode::NotSymmetric, "covariance must be symmetric");
    chol_ = cholesky(cov_);
    precision_ = cholesky_inverse(chol_);
    const double d = static_cast<double>(mean_.size());
    log_norm_ = -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * cholesky_log_det(chol_);
    max_cov_eig_ = jacobi_eigen(cov_).values.front();
  }

  double weight() const noexcept { return weight_; }
  const Vector& mean() const noexcept { return mean_; }
  const Matrix& cov() const noexcept { return cov_; }
  const Matrix& chol() const noexcept { return chol_; }
  const Matrix& precision() const noexcept { return precision_; }
  double max_cov_eigenvalue() const noexcept { return max_cov_eig_; }

  /// Unweighted density N(x; mean, cov).
  double density(std::span<const double> x) const {
    const std::size_t d = mean_.size();
    double q = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += precision_(i, k) * (x[k] - mean_[k]);
      q += (x[i] - mean_[i]) * s;
    }
    return std::exp(log_norm_ - 0.5 * q);
  }

  /// D^j N(x; mean, cov) via the multivariate Hermite recursion
  /// He_{I,i} = z_i He_I - sum_{m in I} P_{i,I_m} He_{I\m}, z = P (x - mean),
  /// with D_I N = (-1)^|I| He_I N.
  SymTensor derivative(std::span<const double> x, int j) const {
    const std::size_t d = mean_.size();
    Vector diff(d);
    for (std::size_t i = 0; i < d; ++i) diff[i] = x[i] - mean_[i];
    const Vector z = precision_.apply(diff);
    const double phi = density(x);

    std::vector<std::vector<double>> he(static_cast<std::size_t>(j) + 1);
    he[0] = {1.0};
    std::vector<int> digits;
    for (int len = 1; len <= j; ++len) {
      const std::size_t count = SymTensor::ipow(d, len);
      he[len].assign(count, 0.0);
      digits.assign(static_cast<std::size_t>(len), 0);
      for (std::size_t t = 0; t < count; ++t) {
        std::size_t r = t;
        for (int k = len - 1; k >= 0; --k) {
          digits[k] = static_cast<int>(r % d);
          r /= d;
        }
        const int i = digits[len - 1];
        double v = z[i] * he[len - 1][t / d];
        for (int m = 0; m + 1 < len; ++m) {
          std::size_t rest = 0;
          for (int k = 0; k + 1 < len; ++k)
            if (k != m) rest = rest * d + static_cast<std::size_t>(digits[k]);
          v -= precision_(i, digits[m]) * he[len - 2][rest];
        }
        he[len][t] = v;
      }
    }
    SymTensor out(d, j);
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    for (std::size_t t = 0; t < out.data().size(); ++t) out.data()[t] = sign * phi * he[j][t];
    return out;
  }

 private:
  double weight_;
  Vector mean_;
  Matrix cov_;
  Matrix chol_;
  Matrix precision_;
  double log_norm_ = 0.0;
  double max_cov_eig_ = 1.0;
};

enum class DensityKind { GaussianMixture, FarMass };

/// A piece of the density with its own support description, used by the
/// convolution engine to pick integration coordinates.
struct DensityPiece {
  enum class Shape { Gaussian, Ball };
  Shape shape = Shape::Gaussian;
  std::size_t index = 0;
  Vector center;
  double radius = 0.0;  // Ball only
};

/// f0 = a N(0, s^2 I) on the closed unit ball, plus a C-infinity bump of mass
/// 1 - inner_mass on the ball B(far_center, far_ball_radius) outside it.
struct FarMassSpec {
  double inner_scale = 1.0;
  double inner_mass = 0.5;
  double inner_amplitude = 0.0;
  Vector far_center;
  double far_ball_radius = 0.025;
  double bump_normalizer = 0.0;  // int over unit ball of bump(|z|)

  double far_mass() const { return 1.0 - inner_mass; }
};

class DensityModel {
 public:
  static constexpr int kMaxDerivOrder = 8;

  struct ComponentSpec {
    double weight;
    Vector mean;
    Matrix cov;
  };

  static DensityModel gaussian_mixture(const std::vector<ComponentSpec>& comps) {
    detail::require(!comps.empty(), ErrorCode::InvalidArgument, "mixture needs a component");
    DensityModel m;
    m.kind_ = DensityKind::GaussianMixture;
    m.dim_ = comps.front().mean.size();
    double total = 0.0;
    for (const auto& c : comps) {
      detail::require(c.mean.size() == m.dim_, ErrorCode::DimensionMismatch, "component dimension");
      m.comps_.emplace_back(c.weight, c.mean, c.cov);
      total += c.weight;
    }
    detail::require(std::abs(total - 1.0) <= 1e-12, ErrorCode::InvalidArgument,
                    "mixture weights must sum to 1");
    m.check_normalization();
    return m;
  }

  static DensityModel standard_gaussian(std::size_t d) {
    return gaussian_mixture({{1.0, Vector(d, 0.0), Matrix::identity(d)}});
  }

  /// Far-mass member with a bump of radius far_ball_radius centred at far_center
  /// (which must sit outside the unit ball).
  static DensityModel far_mass_at(Vector far_center, double far_ball_radius, double inner_mass = 0.5,
                                  double inner_scale = 1.0) {
    const std::size_t d = far_center.size();
    detail::require(d >= 1, ErrorCode::DimensionMismatch, "far-mass dimension");
    detail::require(inner_mass > 0.0 && inner_mass < 1.0, ErrorCode::InvalidArgument,
                    "inner mass must lie in (0, 1)");
    detail::require(inner_scale > 0.0 && far_ball_radius > 0.0, ErrorCode::InvalidArgument,
                    "scales must be positive");
    detail::require(norm2(far_center) - far_ball_radius >= 1.0, ErrorCode::InvalidArgument,
                    "far bump must lie outside the unit ball");
    DensityModel m;
    m.kind_ = DensityKind::FarMass;
    m.dim_ = d;
    FarMassSpec& s = m.far_;
    s.inner_scale = inner_scale;
    s.inner_mass = inner_mass;
    s.far_center = std::move(far_center);
    s.far_ball_radius = far_ball_radius;

    QuadOptions opt;
    opt.rel_tol = 1e-13;
    opt.abs_tol = 1e-16;
    const double ds = static_cast<double>(d);
    const double gauss_norm = std::pow(2.0 * std::numbers::pi * inner_scale * inner_scale, -0.5 * ds);
    const double ball_prob =
        sphere_area(d) *
        integrate_interval(
            [&](double r) {
              return std::pow(r, ds - 1.0) * gauss_norm * std::exp(-0.5 * r * r / (inner_scale * inner_scale));
            },
            0.0, 1.0, opt)
            .value;
    s.inner_amplitude = inner_mass / ball_prob;
    s.bump_normalizer =
        sphere_area(d) * integrate_interval([&](double t) { return std::pow(t, ds - 1.0) * bump(t); }, 0.0, 1.0, opt).value;
    m.check_normalization();
    return m;
  }

  /// Standard far-mass member: bump in the shell R <= |x| <= R + w along `direction`.
  static DensityModel far_mass(Vector direction, double far_radius = 1.05, double shell_width = 0.05,
                               double inner_mass = 0.5, double inner_scale = 1.0) {
    const double n = norm2(direction);
    detail::require(n > 0.0, ErrorCode::InvalidArgument, "far direction must be non-zero");
    detail::require(far_radius >= 1.0, ErrorCode::InvalidArgument, "far radius must be >= 1");
    Vector c(direction.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = direction[i] / n * (far_radius + 0.5 * shell_width);
    return far_mass_at(std::move(c), 0.5 * shell_width, inner_mass, inner_scale);
  }

  DensityKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  int max_deriv_order() const noexcept { return kMaxDerivOrder; }
  const std::vector<GaussianComponent>& components() const noexcept { return comps_; }
  const FarMassSpec& far() const noexcept { return far_; }

  double inner_value(std::span<const double> x) const {
    const double s2 = far_.inner_scale * far_.inner_scale;
    const double ds = static_cast<double>(dim_);
    return far_.inner_amplitude * std::pow(2.0 * std::numbers::pi * s2, -0.5 * ds) *
           std::exp(-0.5 * dot(x, x) / s2);
  }

  double far_value_local(std::span<const double> offset) const {
    const double t = norm2(offset) / far_.far_ball_radius;
    if (t >= 1.0) return 0.0;
    return far_.far_mass() * bump(t) /
           (far_.bump_normalizer * std::pow(far_.far_ball_radius, static_cast<double>(dim_)));
  }

  double pdf(std::span<const double> x) const {
    detail::require(x.size() == dim_, ErrorCode::DimensionMismatch, "density argument dimension");
    if (kind_ == DensityKind::GaussianMixture) {
      double s = 0.0;
      for (const auto& c : comps_) s += c.weight() * c.density(x);
      return s;
    }
    if (dot(x, x) <= 1.0) return inner_value(x);
    Vector off(dim_);
    for (std::size_t i = 0; i < dim_; ++i) off[i] = x[i] - far_.far_center[i];
    return far_value_local(off);
  }

  /// Order-j derivative tensor of f at x. For far-mass densities only defined
  /// strictly inside the unit ball or away from both supports.
  SymTensor deriv_tensor(std::span<const double> x, int j) const {
    detail::require(x.size() == dim_, ErrorCode::DimensionMismatch, "density argument dimension");
    if (j < 0 || j > kMaxDerivOrder)
      throw Error(ErrorCode::OrderUnavailable, "derivative order outside analytic range");
    SymTensor out(dim_, j);
    if (kind_ == DensityKind::GaussianMixture) {
      for (const auto& c : comps_) {
        const SymTensor t = c.derivative(x, j);
        for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += c.weight() * t.data()[i];
      }
      return out;
    }
    const double r2 = dot(x, x);
    if (r2 < 1.0) {
      const double s2 = far_.inner_scale * far_.inner_scale;
      const GaussianComponent g(1.0, Vector(dim_, 0.0),
                                Matrix::diagonal(std::vector<double>(dim_, s2)));
      const SymTensor t = g.derivative(x, j);
      for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = far_.inner_amplitude * t.data()[i];
      return out;
    }
    Vector off(dim_);
    for (std::size_t i = 0; i < dim_; ++i) off[i] = x[i] - far_.far_center[i];
    if (r2 > 1.0 && norm2(off) >= far_.far_ball_radius) {
      if (j == 0) out.data()[0] = 0.0;
      return out;
    }
    if (j == 0) {
      out.data()[0] = pdf(x);
      return out;
    }
    throw Error(ErrorCode::OrderUnavailable, "no analytic derivatives on the far bump or the unit sphere");
  }

  std::vector<DensityPiece> pieces() const {
    std::vector<DensityPiece> out;
    if (kind_ == DensityKind::GaussianMixture) {
      for (std::size_t i = 0; i < comps_.size(); ++i)
        out.push_back({DensityPiece::Shape::Gaussian, i, comps_[i].mean(), 0.0});
    } else {
      out.push_back({DensityPiece::Shape::Ball, 0, Vector(dim_, 0.0), 1.0});
      out.push_back({DensityPiece::Shape::Ball, 1, far_.far_center, far_.far_ball_radius});
    }
    return out;
  }

  /// Value of one piece at piece.center + offset.
  double piece_pdf_local(const DensityPiece& piece, std::span<const double> offset) const {
    if (kind_ == DensityKind::GaussianMixture) {
      const auto& c = comps_[piece.index];
      Vector x(dim_);
      for (std::size_t i = 0; i < dim_; ++i) x[i] = c.mean()[i] + offset[i];
      return c.weight() * c.density(x);
    }
    if (piece.index == 0) return dot(offset, offset) <= 1.0 ? inner_value(offset) : 0.0;
    return far_value_local(offset);
  }

  /// Value of one piece at an absolute point.
  double piece_pdf(const DensityPiece& piece, std::span<const double> x) const {
    Vector off(dim_);
    for (std::size_t i = 0; i < dim_; ++i) off[i] = x[i] - piece.center[i];
    return piece_pdf_local(piece, off);
  }

 private:
  DensityModel() = default;

  void check_normalization() const {
    if (dim_ > 3) return;
    QuadOptions opt;
    opt.rel_tol = 1e-9;
    opt.abs_tol = 1e-10;
    double total = 0.0;
    if (kind_ == DensityKind::GaussianMixture) {
      std::vector<double> lo(dim_, 0.0), hi(dim_, 0.0);
      for (std::size_t i = 0; i < dim_; ++i) {
        lo[i] = 1e300;
        hi[i] = -1e300;
        for (const auto& c : comps_) {
          const double w = 10.0 * std::sqrt(c.cov()(i, i));
          lo[i] = std::min(lo[i], c.mean()[i] - w);
          hi[i] = std::max(hi[i], c.mean()[i] + w);
        }
      }
      auto f = [this](std::span<const double> x) {
        double s = 0.0;
        for (const auto& c : comps_) s += c.weight() * c.density(x);
        return s;
      };
      total = integrate_box(f, lo, hi, opt).value;
    } else {
      const Vector zero(dim_, 0.0);
      total = integrate([this](std::span<const double> x) { return inner_value(x); },
                        RegionSpec::ball(zero, 1.0), opt)
                  .value;
      total += integrate([this](std::span<const double> o) { return far_value_local(o); },
                         RegionSpec::ball(zero, far_.far_ball_radius), opt)
                   .value;
    }
    if (std::abs(total - 1.0) > 1e-6)
      throw Error(ErrorCode::InvalidArgument, "density does not integrate to 1 within 1e-6");
  }

  DensityKind kind_ = DensityKind::GaussianMixture;
  std::size_t dim_ = 1;
  std::vector<GaussianComponent> comps_;
  FarMassSpec far_;
};

inline double pdf(const DensityModel& m, std::span<const double> x) { return m.pdf(x); }

/// Largest operator norm of D^j f on a deterministic grid in the delta-ball
/// around x (33 points per axis on the first two axes, 9 on the third),
/// refined by a local search from the best node.
inline double deriv_grid_max(const DensityModel& m, std::span<const double> x, double delta, int j) {
  detail::require(delta >= 0.0, ErrorCode::InvalidArgument, "delta must be >= 0");
  const std::size_t d = m.dim();
  if (delta == 0.0) return operator_norm(m.deriv_tensor(x, j));
  std::vector<int> counts(d);
  for (std::size_t k = 0; k < d; ++k) counts[k] = k < 2 ? 33 : 9;
  std::size_t total = 1;
  for (int c : counts) total *= static_cast<std::size_t>(c);
  double best = 0.0;
  Vector p(d), off(d), best_off(d, 0.0);
  for (std::size_t t = 0; t < total; ++t) {
    std::size_t r = t;
    for (std::size_t k = 0; k < d; ++k) {
      const int n = counts[k];
      const int i = static_cast<int>(r % static_cast<std::size_t>(n));
      r /= static_cast<std::size_t>(n);
      off[k] = delta * (-1.0 + 2.0 * i / (n - 1));
    }
    if (dot(off, off) > delta * delta * (1.0 + 1e-12)) continue;
    for (std::size_t k = 0; k < d; ++k) p[k] = x[k] + off[k];
    const double v = operator_norm(m.deriv_tensor(p, j));
    if (v > best) {
      best = v;
      best_off = off;
    }
  }
  // The grid alone is not nested across radii; a compass search from the best
  // node, kept inside the ball, brings the value to the local supremum.
  auto value_at = [&](const Vector& o) {
    for (std::size_t k = 0; k < d; ++k) p[k] = x[k] + o[k];
    return operator_norm(m.deriv_tensor(p, j));
  };
  double step = 2.0 * delta / (counts[0] - 1);
  Vector trial(d);
  while (step > 1e-9 * delta) {
    bool improved = false;
    for (std::size_t k = 0; k < d && !improved; ++k)
      for (double sgn : {1.0, -1.0}) {
        trial = best_off;
        trial[k] += sgn * step;
        const double r = norm2(trial);
        if (r > delta)
          for (auto& e : trial) e *= delta / r;
        const double v = value_at(trial);
        if (v > best) {
          best = v;
          best_off = trial;
          improved = true;
          break;
        }
      }
    if (!improved) step *= 0.5;
  }
  return best;
}

/// B(delta): grid maximum of ||D^j f|| over the delta-ball, times 1.05 for delta > 0.
inline double deriv_sup_norm(const DensityModel& m, std::span<const double> x, double delta, int j) {
  const double g = deriv_grid_max(m, x, delta, j);
  return delta > 0.0 ? 1.05 * g : g;
}

/// n iid draws, deterministic in the seed.
inline SampleSet sample(const DensityModel& m, std::size_t n, std::uint64_t seed) {
  detail::require(n >= 1, ErrorCode::EmptySamples, "sample size must be >= 1");
  const std::size_t d = m.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> data(n * d);
  Vector z(d);

  if (m.kind() == DensityKind::GaussianMixture) {
    const auto& comps = m.components();
    for (std::size_t s = 0; s < n; ++s) {
      const double u = unif(rng);
      std::size_t ci = 0;
      double acc = comps[0].weight();
      while (u >= acc && ci + 1 < comps.size()) acc += comps[++ci].weight();
      for (auto& v : z) v = normal(rng);
      const auto& c = comps[ci];
      for (std::size_t i = 0; i < d; ++i) {
        double v = c.mean()[i];
        for (std::size_t k = 0; k <= i; ++k) v += c.chol()(i, k) * z[k];
        data[s * d + i] = v;
      }
    }
    return SampleSet(d, std::move(data), seed);
  }

  const FarMassSpec& f = m.far();
  for (std::size_t s = 0; s < n; ++s) {
    double* out = &data[s * d];
    if (unif(rng) < f.inner_mass) {
      for (;;) {
        for (auto& v : z) v = f.inner_scale * normal(rng);
        if (dot(z, z) <= 1.0) break;
      }
      for (std::size_t i = 0; i < d; ++i) out[i] = z[i];
    } else {
      for (;;) {
        for (auto& v : z) v = 2.0 * unif(rng) - 1.0;
        const double t2 = dot(z, z);
        if (t2 >= 1.0) continue;
        if (unif(rng) < std::exp(1.0 - 1.0 / (1.0 - t2))) break;
      }
      for (std::size_t i = 0; i < d; ++i) out[i] = f.far_center[i] + f.far_ball_radius * z[i];
    }
  }
  return SampleSet(d, std::move(data), seed);
}

}  // namespace kdebias
