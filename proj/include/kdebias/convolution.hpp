#pragma once

// K_h * f (x') = int K(u) f(x' - h u) du, evaluated piece by piece over the
// density. Coordinates are chosen per (kernel, piece):
//
//   smooth kernel, Gaussian piece : u-space box, clipped to the piece's
//                                   effective support
//   any kernel, ball piece        : x-space ball around the piece centre, in
//                                   local offsets, when the kernel has no
//                                   unresolved spike edge over the image
//   spike-train kernel otherwise  : u-space polar coordinates; the radial
//                                   axis is integrated spike by spike in
//                                   local offsets, so no spike can be missed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "kdebias/bandwidth.hpp"
#include "kdebias/densities.hpp"
#include "kdebias/error.hpp"
#include "kdebias/kernels.hpp"
#include "kdebias/quadrature.hpp"
#include "kdebias/summation.hpp"

namespace kdebias {

struct ConvolutionBreakdown {
  QuadratureResult total;
  std::vector<QuadratureResult> pieces;
};

namespace detail {

inline double kernel_power(double v, int power) { return power == 1 ? v : std::pow(v, power); }

inline std::vector<double> symmetric_breaks(const Kernel& k) {
  std::vector<double> br{0.0};
  for (double x : k.kink_points()) {
    br.push_back(-x);
    br.push_back(x);
  }
  return br;
}

/// True when no spike edge of the spike-train kernel falls inside the radial
/// range (r0, r1), so the kernel is a single smooth feature over it.
inline bool spike_resolvable(const Kernel& k, double r0, double r1) {
  const AdversarialParams& a = k.adversarial_params();
  r0 = std::max(r0, 0.0);
  const double q = a.q();
  const double first_edge = 2.0 - spike_half_width(q, 2.0);
  const double last_edge = static_cast<double>(a.n_max) + spike_half_width(q, static_cast<double>(a.n_max));
  if (r1 <= first_edge || r0 >= last_edge) return true;
  if (r1 - r0 >= 0.5) return false;
  const long lo = std::max(2L, static_cast<long>(std::floor(r0)) - 1);
  const long hi = std::min(a.n_max, static_cast<long>(std::ceil(r1)) + 1);
  for (long n = lo; n <= hi; ++n) {
    const double nd = static_cast<double>(n);
    const double hw = spike_half_width(q, nd);
    const double e0 = nd - hw, e1 = nd + hw;
    if ((e0 > r0 && e0 < r1) || (e1 > r0 && e1 < r1)) return false;
  }
  return true;
}

/// Spike-aware polar integral S(e) = int_{range(e)} k(r)^power r^(d-1) dens(r e) dr,
/// integrated over directions e. `range(e)` returns the radial interval where
/// the density piece may be non-zero; `theta_lo/hi` restrict the angle for d = 2.
template <class Range, class Dens>
QuadratureResult polar_spike_integral(const Kernel& k, Range&& range, Dens&& dens, const QuadOptions& opt,
                                      int power, double theta_lo, double theta_hi) {
  const std::size_t d = k.dim();
  const AdversarialParams& a = k.adversarial_params();
  QuadOptions inner = opt;
  inner.rel_tol = std::max(opt.rel_tol * 1e-2, 1e-14);
  inner.abs_tol = 0.0;
  inner.max_regions = 4096;
  bool inner_ok = true;
  std::size_t inner_nodes = 0;

  auto along = [&](std::span<const double> e) {
    const std::pair<double, double> rr = range(e);
    const double r_lo = std::max(rr.first, 0.0), r_hi = rr.second;
    if (!(r_hi > r_lo)) return 0.0;
    const long n_lo = std::max(2L, static_cast<long>(std::floor(r_lo)) - 1);
    const long n_hi = std::min(a.n_max, static_cast<long>(std::ceil(r_hi)) + 1);
    CompensatedSum sum;
    for (long n = n_lo; n <= n_hi; ++n) {
      const double nd = static_cast<double>(n);
      const double hw = k.spike_half_width(nd);
      const double o_lo = std::max(-hw, r_lo - nd);
      const double o_hi = std::min(hw, r_hi - nd);
      if (!(o_hi > o_lo)) continue;
      auto g = [&](double o) {
        const double kv = k.radial_local(nd, o);
        if (kv == 0.0) return 0.0;
        const double r = nd + o;
        return kernel_power(kv, power) * std::pow(r, static_cast<double>(d) - 1.0) * dens(e, r);
      };
      const QuadratureResult piece = integrate_interval(g, o_lo, o_hi, inner);
      inner_ok = inner_ok && piece.converged;
      inner_nodes += piece.nodes_used;
      sum.add(piece.value);
    }
    return sum.value();
  };

  QuadratureResult out;
  if (d == 1) {
    const double plus = 1.0, minus = -1.0;
    out.value = along(std::span<const double>(&plus, 1)) + along(std::span<const double>(&minus, 1));
  } else if (d == 2) {
    auto f = [&](double th) {
      const double e[2] = {std::cos(th), std::sin(th)};
      return along(std::span<const double>(e, 2));
    };
    out = integrate_interval(f, theta_lo, theta_hi, opt);
  } else {
    auto f = [&](std::span<const double> t) {
      const double st = std::sin(t[0]);
      const double e[3] = {st * std::cos(t[1]), st * std::sin(t[1]), std::cos(t[0])};
      return along(std::span<const double>(e, 3)) * st;
    };
    const double lo[2] = {0.0, 0.0}, hi[2] = {std::numbers::pi, 2.0 * std::numbers::pi};
    out = integrate_box(f, std::span<const double>(lo, 2), std::span<const double>(hi, 2), opt);
  }
  out.nodes_used += inner_nodes;
  out.converged = out.converged && inner_ok;
  return out;
}

/// Radial interval of {r >= 0 : |a - r b| <= rho}.
inline std::pair<double, double> ray_ball(std::span<const double> a, std::span<const double> b, double rho) {
  const double bb = dot(b, b), ab = dot(a, b), aa = dot(a, a);
  const double disc = ab * ab - bb * (aa - rho * rho);
  if (disc < 0.0 || bb == 0.0) return {0.0, 0.0};
  const double s = std::sqrt(disc);
  return {(ab - s) / bb, (ab + s) / bb};
}

inline QuadratureResult convolve_piece(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                                       const DensityPiece& piece, std::span<const double> x,
                                       const QuadOptions& opt, int power) {
  const std::size_t d = m.dim();
  const Matrix& hm = h.entries();

  if (piece.shape == DensityPiece::Shape::Gaussian) {
    const GaussianComponent& comp = m.components()[piece.index];
    Vector xm(d);
    for (std::size_t i = 0; i < d; ++i) xm[i] = x[i] - comp.mean()[i];

    if (k.is_spiky()) {
      const double r_cut = (norm2(xm) + 12.0 * std::sqrt(comp.max_cov_eigenvalue())) / h.min_eigenvalue();
      auto range = [r_cut](std::span<const double>) { return std::pair<double, double>{0.0, r_cut}; };
      Vector y(d);
      auto dens = [&](std::span<const double> e, double r) {
        for (std::size_t i = 0; i < d; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < d; ++j) s += hm(i, j) * e[j];
          y[i] = xm[i] - r * s;
        }
        return m.piece_pdf_local(piece, y);
      };
      return polar_spike_integral(k, range, dens, opt, power, 0.0, 2.0 * std::numbers::pi);
    }

    // u-space: density mean h^-1 (x - mu), covariance h^-1 Sigma h^-1.
    const Vector mu_u = h.apply_inverse(xm);
    const Matrix cov_u = h.inverse() * comp.cov() * h.inverse();
    Vector y(d);
    auto f = [&](std::span<const double> u) {
      const double kv = k.eval(u);
      if (kv == 0.0) return 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += hm(i, j) * u[j];
        y[i] = xm[i] - s;
      }
      return kernel_power(kv, power) * m.piece_pdf_local(piece, y);
    };
    if (k.kind() == KernelKind::Epanechnikov && d > 1)
      return integrate(f, RegionSpec::ball(Vector(d, 0.0), 1.0), opt);
    const double b = k.box_half_width();
    std::vector<double> lo(d), hi(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double w = 12.0 * std::sqrt(cov_u(i, i));
      lo[i] = std::max(-b, mu_u[i] - w);
      hi[i] = std::min(b, mu_u[i] + w);
      if (!(hi[i] > lo[i])) return {};
    }
    std::vector<std::vector<double>> breaks(d, symmetric_breaks(k));
    return integrate_box(f, lo, hi, opt, breaks);
  }

  // Ball piece.
  Vector a(d);
  for (std::size_t i = 0; i < d; ++i) a[i] = x[i] - piece.center[i];
  const Vector u_c = h.apply_inverse(a);
  const double r_u = piece.radius / h.min_eigenvalue();
  const double uc_norm = norm2(u_c);

  if (!k.is_spiky() || spike_resolvable(k, uc_norm - r_u, uc_norm + r_u)) {
    const Matrix& inv = h.inverse();
    const double scale = 1.0 / h.det();
    Vector u(d);
    auto f = [&](std::span<const double> o) {
      for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += inv(i, j) * o[j];
        u[i] = u_c[i] - s;
      }
      const double kv = k.eval(u);
      if (kv == 0.0) return 0.0;
      return kernel_power(kv, power) * m.piece_pdf_local(piece, o) * scale;
    };
    return integrate(f, RegionSpec::ball(Vector(d, 0.0), piece.radius), opt);
  }

  double th_lo = 0.0, th_hi = 2.0 * std::numbers::pi;
  if (d == 2 && uc_norm > r_u) {
    const double phi = std::atan2(u_c[1], u_c[0]);
    const double alpha = std::asin(std::min(1.0, r_u / uc_norm));
    th_lo = phi - alpha;
    th_hi = phi + alpha;
  }
  Vector b(d), y(d);
  auto range = [&](std::span<const double> e) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += hm(i, j) * e[j];
      b[i] = s;
    }
    return ray_ball(a, b, piece.radius);
  };
  auto dens = [&](std::span<const double> e, double r) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += hm(i, j) * e[j];
      y[i] = a[i] - r * s;
    }
    return m.piece_pdf_local(piece, y);
  };
  return polar_spike_integral(k, range, dens, opt, power, th_lo, th_hi);
}

}  // namespace detail

/// Per-piece values of int K(u)^power f(x' - h u) du (power = 1 is K_h * f).
inline ConvolutionBreakdown convolve_pieces(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                                            std::span<const double> x, const QuadOptions& opt, int power = 1) {
  detail::require(k.dim() == m.dim() && h.dim() == m.dim() && x.size() == m.dim(),
                  ErrorCode::DimensionMismatch, "convolution dimensions differ");
  detail::require(m.dim() <= 3, ErrorCode::InvalidArgument, "convolution limited to d <= 3");
  ConvolutionBreakdown out;
  for (const auto& p : m.pieces()) {
    out.pieces.push_back(detail::convolve_piece(k, h, m, p, x, opt, power));
    out.total += out.pieces.back();
  }
  return out;
}

/// K_h * f (x') by quadrature.
inline QuadratureResult convolve_at(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                                    std::span<const double> x, const QuadOptions& opt) {
  return convolve_pieces(k, h, m, x, opt, 1).total;
}

inline QuadratureResult convolve_at(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                                    std::span<const double> x) {
  return convolve_at(k, h, m, x, QuadOptions::for_dim(m.dim()));
}

}  // namespace kdebias
