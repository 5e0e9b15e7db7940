#pragma once

// Kernel zoo: Gaussian, Epanechnikov, product kernels, a fourth-order kernel,
// and the spike-train radial kernel with slow decay but finite low moments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "kdebias/error.hpp"
#include "kdebias/linalg.hpp"
#include "kdebias/quadrature.hpp"

namespace kdebias {

enum class KernelKind { Gaussian, Epanechnikov, ProductOf1D, HigherOrder4, AdversarialRadial };
enum class Base1D { Gaussian, Epanechnikov, HigherOrder4 };

inline const char* to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Gaussian: return "Gaussian";
    case KernelKind::Epanechnikov: return "Epanechnikov";
    case KernelKind::ProductOf1D: return "ProductOf1D";
    case KernelKind::HigherOrder4: return "HigherOrder4";
    case KernelKind::AdversarialRadial: return "AdversarialRadial";
  }
  return "Unknown";
}

inline const char* to_string(Base1D b) {
  switch (b) {
    case Base1D::Gaussian: return "Gaussian";
    case Base1D::Epanechnikov: return "Epanechnikov";
    case Base1D::HigherOrder4: return "HigherOrder4";
  }
  return "Unknown";
}

/// Parameters of the spike-train kernel k(r) = c * sum_{n=2}^{n_max} n^-p bump(2 n^q (r - n)),
/// q = p + ell + dim + 1.
struct AdversarialParams {
  double p = 1.0;
  int ell = 0;
  std::size_t dim = 1;
  long n_max = 10000;
  double c = 0.0;  // 0 until normalized

  double q() const { return p + ell + static_cast<double>(dim) + 1.0; }

  void validate() const {
    detail::require(p >= 0.0 && std::isfinite(p), ErrorCode::InvalidArgument, "p must be >= 0");
    detail::require(ell >= 0, ErrorCode::InvalidArgument, "ell must be >= 0");
    detail::require(dim >= 1, ErrorCode::InvalidArgument, "dim must be >= 1");
    detail::require(n_max >= 2, ErrorCode::InvalidArgument, "n_max must be >= 2");
    detail::require(q() > 1.0, ErrorCode::InvalidArgument, "q = p + ell + dim + 1 must exceed 1");
  }
};

/// Standard C-infinity bump exp(-1/(1 - r^2)) on (-1, 1), zero elsewhere.
inline double bump(double r) {
  const double a = std::abs(r);
  if (a >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - a * a));
}

namespace detail {

inline double spike_half_width(double q, double n) { return 0.5 * std::pow(n, -q); }

/// Value of spike n at offset o from its centre (o = r - n).
inline double spike_local(const AdversarialParams& a, double n, double offset) {
  return a.c * std::pow(n, -a.p) * bump(2.0 * std::pow(n, a.q()) * offset);
}

inline double gauss1(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }
inline double epan1(double u) { return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }
inline double ho41(double u) { return 0.5 * (3.0 - u * u) * gauss1(u); }

inline double base_eval(Base1D b, double u) {
  switch (b) {
    case Base1D::Gaussian: return gauss1(u);
    case Base1D::Epanechnikov: return epan1(u);
    case Base1D::HigherOrder4: return ho41(u);
  }
  return 0.0;
}

/// sup_{|t| > r} |k1(t)| for the 1-d base kernels.
inline double base_envelope(Base1D b, double r) {
  r = std::abs(r);
  switch (b) {
    case Base1D::Gaussian: return gauss1(r);
    case Base1D::Epanechnikov: return epan1(r);
    case Base1D::HigherOrder4: {
      // |k| falls on [0, sqrt3], rises to a local max at sqrt5, then falls.
      const double r5 = std::sqrt(5.0);
      if (r >= r5) return std::abs(ho41(r));
      const double local = std::abs(ho41(r5));
      return r < std::sqrt(3.0) ? std::max(ho41(r), local) : local;
    }
  }
  return 0.0;
}

inline int base_order(Base1D b) { return b == Base1D::HigherOrder4 ? 4 : 2; }

inline double unit_ball_volume(std::size_t d) {
  const double h = 0.5 * static_cast<double>(d);
  return std::pow(std::numbers::pi, h) / std::tgamma(h + 1.0);
}

}  // namespace detail

inline double adversarial_radial_profile(const AdversarialParams& a, double r) {
  if (r < 0.0) r = -r;
  const double q = a.q();
  const long n = std::lround(r);
  for (long m = n - 1; m <= n + 1; ++m) {
    if (m < 2 || m > a.n_max) continue;
    const double md = static_cast<double>(m);
    const double off = r - md;
    if (std::abs(off) < detail::spike_half_width(q, md)) return detail::spike_local(a, md, off);
  }
  return 0.0;
}

/// Immutable kernel value object.
class Kernel {
 public:
  static Kernel gaussian(std::size_t d) { return Kernel(KernelKind::Gaussian, d, Base1D::Gaussian); }
  static Kernel epanechnikov(std::size_t d) {
    return Kernel(KernelKind::Epanechnikov, d, Base1D::Epanechnikov);
  }
  static Kernel higher_order4(std::size_t d) {
    return Kernel(KernelKind::HigherOrder4, d, Base1D::HigherOrder4);
  }
  static Kernel product(Base1D base, std::size_t d) { return Kernel(KernelKind::ProductOf1D, d, base); }

  /// Spike-train kernel. Normalizes c when it is not already positive.
  static Kernel adversarial(AdversarialParams params);

  KernelKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  Base1D base() const noexcept { return base_; }
  const AdversarialParams& adversarial_params() const noexcept { return adv_; }

  /// Declared order v (0 when unknown).
  int declared_order() const {
    switch (kind_) {
      case KernelKind::Gaussian:
      case KernelKind::Epanechnikov: return 2;
      case KernelKind::HigherOrder4: return 4;
      case KernelKind::ProductOf1D: return detail::base_order(base_);
      case KernelKind::AdversarialRadial: return adv_.ell >= 2 ? 2 : 0;
    }
    return 0;
  }

  double support_radius() const {
    switch (kind_) {
      case KernelKind::Epanechnikov: return 1.0;
      case KernelKind::ProductOf1D:
        return base_ == Base1D::Epanechnikov ? std::sqrt(static_cast<double>(dim_))
                                             : std::numeric_limits<double>::infinity();
      case KernelKind::AdversarialRadial:
        return static_cast<double>(adv_.n_max) + detail::spike_half_width(adv_.q(), adv_.n_max);
      default: return std::numeric_limits<double>::infinity();
    }
  }

  bool is_radial() const {
    return kind_ == KernelKind::Gaussian || kind_ == KernelKind::Epanechnikov ||
           kind_ == KernelKind::AdversarialRadial || dim_ == 1;
  }
  bool is_spiky() const { return kind_ == KernelKind::AdversarialRadial; }
  bool is_nonnegative() const {
    return !(kind_ == KernelKind::HigherOrder4 ||
             (kind_ == KernelKind::ProductOf1D && base_ == Base1D::HigherOrder4));
  }

  double eval(std::span<const double> u) const {
    detail::require(u.size() == dim_, ErrorCode::DimensionMismatch, "kernel argument dimension");
    switch (kind_) {
      case KernelKind::Gaussian:
      case KernelKind::Epanechnikov:
      case KernelKind::AdversarialRadial: return radial_profile(norm2(u));
      default: {
        double v = 1.0;
        for (double x : u) v *= detail::base_eval(base_, x);
        return v;
      }
    }
  }

  /// k(r) with K(u) = k(|u|). Only meaningful when is_radial().
  double radial_profile(double r) const {
    r = std::abs(r);
    switch (kind_) {
      case KernelKind::Gaussian:
        return std::exp(-0.5 * r * r) / std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(dim_));
      case KernelKind::Epanechnikov: return r < 1.0 ? epan_const_ * (1.0 - r * r) : 0.0;
      case KernelKind::AdversarialRadial: return adversarial_radial_profile(adv_, r);
      default: return detail::base_eval(base_, r);
    }
  }

  /// Spike value at offset from integer centre n (spike-train kernel only).
  double radial_local(double n, double offset) const { return detail::spike_local(adv_, n, offset); }

  double spike_half_width(double n) const { return detail::spike_half_width(adv_.q(), n); }

  std::vector<RadialSegment> spike_segments(long n_lo, long n_hi) const {
    std::vector<RadialSegment> s;
    n_lo = std::max(n_lo, 2L);
    if (n_hi < n_lo) return s;
    s.reserve(static_cast<std::size_t>(n_hi - n_lo + 1));
    for (long n = n_lo; n <= n_hi; ++n) {
      const double nd = static_cast<double>(n);
      s.push_back({nd, spike_half_width(nd)});
    }
    return s;
  }

  /// Per-axis half-width of a box holding the kernel mass for integration.
  double box_half_width() const {
    switch (kind_) {
      case KernelKind::Epanechnikov: return 1.0;
      case KernelKind::AdversarialRadial: return support_radius();
      case KernelKind::ProductOf1D: return base_ == Base1D::Epanechnikov ? 1.0 : 10.0;
      default: return 10.0;
    }
  }

  /// Points where the 1-d base (or radial profile) is not smooth, or where
  /// |k| has a kink, used to seed quadrature partitions.
  std::vector<double> kink_points() const {
    if (kind_ == KernelKind::Epanechnikov || base_ == Base1D::Epanechnikov) return {1.0};
    if (base_ == Base1D::HigherOrder4) return {std::sqrt(3.0)};
    return {};
  }

 private:
  Kernel(KernelKind kind, std::size_t d, Base1D base) : kind_(kind), dim_(d), base_(base) {
    detail::require(d >= 1, ErrorCode::InvalidArgument, "kernel dimension must be >= 1");
    if (kind == KernelKind::Epanechnikov)
      epan_const_ = (static_cast<double>(d) + 2.0) / (2.0 * detail::unit_ball_volume(d));
  }

  KernelKind kind_;
  std::size_t dim_;
  Base1D base_;
  double epan_const_ = 0.0;
  AdversarialParams adv_{};
};

inline double eval(const Kernel& k, std::span<const double> u) { return k.eval(u); }

namespace detail {

inline QuadOptions kernel_quad_options(std::size_t d) {
  QuadOptions o;
  if (d <= 1) {
    o.rel_tol = 1e-13;
    o.abs_tol = 1e-16;
  } else if (d == 2) {
    o.rel_tol = 1e-11;
    o.abs_tol = 1e-14;
  } else {
    o.rel_tol = 1e-9;
    o.abs_tol = 1e-12;
  }
  return o;
}

/// S_{d-1} * sum_{n=n_lo}^{n_hi} int r^(d+j-1) k_n(r)^power dr for the spike train.
inline QuadratureResult spike_series(const AdversarialParams& a, int j, long n_lo, long n_hi,
                                     int power = 1) {
  QuadOptions opt;
  opt.rel_tol = 1e-12;
  opt.abs_tol = 0.0;
  opt.max_regions = 4096;
  std::vector<RadialSegment> segs;
  const double q = a.q();
  for (long n = std::max(n_lo, 2L); n <= n_hi; ++n) {
    const double nd = static_cast<double>(n);
    segs.push_back({nd, spike_half_width(q, nd)});
  }
  auto local = [&](double n, double o) {
    const double v = spike_local(a, n, o);
    return power == 1 ? v : std::pow(v, power);
  };
  return integrate_radial_segments(local, a.dim, j, segs, opt);
}

inline std::vector<double> radial_breakpoints(const Kernel& k) {
  std::vector<double> b = k.kink_points();
  b.push_back(k.box_half_width());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

}  // namespace detail

inline Kernel Kernel::adversarial(AdversarialParams params) {
  params.validate();
  if (!(params.c > 0.0)) {
    AdversarialParams unit = params;
    unit.c = 1.0;
    const QuadratureResult mass = detail::spike_series(unit, 0, 2, unit.n_max);
    if (!mass.converged || !(mass.value > 0.0))
      throw Error(ErrorCode::QuadratureFailed, "spike-train normalization did not converge");
    params.c = 1.0 / mass.value;
  }
  Kernel k(KernelKind::AdversarialRadial, params.dim, Base1D::Gaussian);
  k.adv_ = params;
  return k;
}

/// Sets c so the d-dimensional integral of the spike-train kernel is 1.
/// Recomputes c from scratch, so repeated calls agree.
inline AdversarialParams normalize_adversarial(AdversarialParams params) {
  params.c = 0.0;
  return Kernel::adversarial(params).adversarial_params();
}

/// psi(r) = sup_{|u| > r} |K(u)|. Exact for radial kinds; for product kernels
/// in d > 1 an upper bound sup|k1|^(d-1) * sup_{|t| > r/sqrt d} |k1(t)|.
inline double decay_envelope(const Kernel& k, double r) {
  r = std::max(r, 0.0);
  switch (k.kind()) {
    case KernelKind::Gaussian:
    case KernelKind::Epanechnikov: return k.radial_profile(r);
    case KernelKind::AdversarialRadial: {
      const AdversarialParams& a = k.adversarial_params();
      const double q = a.q();
      long n = std::max(2L, static_cast<long>(std::floor(r)) - 1);
      while (n <= a.n_max && static_cast<double>(n) + detail::spike_half_width(q, n) <= r) ++n;
      if (n > a.n_max) return 0.0;
      const double nd = static_cast<double>(n);
      const double peak = a.c * std::exp(-1.0) * std::pow(nd, -a.p);
      if (r < nd) return peak;
      const double here = detail::spike_local(a, nd, r - nd);
      const double next = n + 1 <= a.n_max ? a.c * std::exp(-1.0) * std::pow(nd + 1.0, -a.p) : 0.0;
      return std::max(here, next);
    }
    default: {
      const std::size_t d = k.dim();
      if (d == 1) return detail::base_envelope(k.base(), r);
      const double top = detail::base_envelope(k.base(), 0.0);
      return std::pow(top, static_cast<double>(d) - 1.0) *
             detail::base_envelope(k.base(), r / std::sqrt(static_cast<double>(d)));
    }
  }
}

struct MomentResult {
  double value = 0.0;
  double error_estimate = 0.0;
  bool converged = false;
};

namespace detail {

/// S_{d-1} int r^(d+j-1) g(k(r)) dr for radial kernels, where g is identity or abs.
inline MomentResult radial_moment(const Kernel& k, int j, bool absolute) {
  if (k.is_spiky()) {
    const AdversarialParams& a = k.adversarial_params();
    const QuadratureResult base = spike_series(a, j, 2, a.n_max);
    AdversarialParams ext = a;
    ext.n_max = 2 * a.n_max;
    const QuadratureResult tail = spike_series(ext, j, a.n_max + 1, ext.n_max);
    MomentResult m;
    m.value = base.value;
    m.error_estimate = base.error_estimate;
    m.converged = base.converged && std::isfinite(base.value) &&
                  std::abs(tail.value) <= 1e-6 * std::abs(base.value + tail.value);
    return m;
  }
  const QuadOptions opt = kernel_quad_options(1);
  auto profile = [&](double r) {
    const double v = k.radial_profile(r);
    return absolute ? std::abs(v) : v;
  };
  const QuadratureResult r = integrate_radial(profile, k.dim(), j, radial_breakpoints(k), opt);
  return {r.value, r.error_estimate, r.converged};
}

/// Box quadrature of g(u) * K(u) over the kernel's box, seeded with kink planes.
template <class G>
QuadratureResult kernel_box_integral(const Kernel& k, G&& g) {
  const std::size_t d = k.dim();
  detail::require(d <= 3, ErrorCode::InvalidArgument, "tensor quadrature limited to d <= 3");
  const double b = k.box_half_width();
  std::vector<double> lo(d, -b), hi(d, b);
  std::vector<double> br;
  for (double x : k.kink_points()) {
    br.push_back(-x);
    br.push_back(x);
  }
  br.push_back(0.0);
  std::vector<std::vector<double>> breaks(d, br);
  auto f = [&](std::span<const double> u) { return g(u) * k.eval(u); };
  return integrate_box(f, lo, hi, kernel_quad_options(d), breaks);
}

}  // namespace detail

/// mu_K(j) = int |u|^j |K(u)| du.
inline MomentResult moment(const Kernel& k, int j, int max_order = 8) {
  detail::require(j >= 0 && j <= max_order, ErrorCode::InvalidArgument, "moment order out of range");
  MomentResult m;
  if (k.kind() == KernelKind::Gaussian) {
    // E|Z|^j for Z ~ N(0, I_d)
    const double d = static_cast<double>(k.dim());
    m.value = std::pow(2.0, 0.5 * j) * std::tgamma(0.5 * (d + j)) / std::tgamma(0.5 * d);
    m.converged = true;
  } else if (k.is_radial()) {
    m = detail::radial_moment(k, j, /*absolute=*/true);
  } else {
    auto g = [j, &k](std::span<const double> u) {
      const double s = k.eval(u) < 0.0 ? -1.0 : 1.0;
      return s * std::pow(norm2(u), j);
    };
    const QuadratureResult r = detail::kernel_box_integral(k, g);
    m = {r.value, r.error_estimate, r.converged};
  }
  if (!std::isfinite(m.value)) throw Error(ErrorCode::MomentDiverged, "kernel moment is not finite");
  return m;
}

/// int_{S^{d-1}} theta^alpha dtheta.
inline double sphere_monomial(std::span<const int> alpha) {
  double num = 1.0;
  int total = 0;
  for (int a : alpha) {
    if (a % 2 != 0) return 0.0;
    num *= std::tgamma(0.5 * (a + 1));
    total += a;
  }
  return 2.0 * num / std::tgamma(0.5 * (total + static_cast<double>(alpha.size())));
}

/// All multi-indices of total degree `degree` in d variables, lexicographic.
inline std::vector<std::vector<int>> multi_indices(std::size_t d, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(d, 0);
  auto rec = [&](auto&& self, std::size_t pos, int left) -> void {
    if (pos + 1 == d) {
      cur[pos] = left;
      out.push_back(cur);
      return;
    }
    for (int a = left; a >= 0; --a) {
      cur[pos] = a;
      self(self, pos + 1, left - a);
    }
  };
  rec(rec, 0, degree);
  return out;
}

/// int u^alpha K(u) du (signed). Radial kernels reduce to a radial moment times
/// a sphere monomial; other kernels use box quadrature (d <= 3).
inline MomentResult signed_moment(const Kernel& k, std::span<const int> alpha) {
  detail::require(alpha.size() == k.dim(), ErrorCode::DimensionMismatch, "multi-index dimension");
  detail::require(k.dim() <= 3, ErrorCode::InvalidArgument, "order verification limited to d <= 3");
  int total = 0;
  for (int a : alpha) total += a;
  if (k.is_radial()) {
    const double sph = sphere_monomial(alpha);
    if (sph == 0.0) return {0.0, 0.0, true};
    MomentResult r = detail::radial_moment(k, total, /*absolute=*/false);
    const double s = sph / sphere_area(k.dim());
    return {r.value * s, r.error_estimate * s, r.converged};
  }
  std::vector<int> al(alpha.begin(), alpha.end());
  auto g = [&al](std::span<const double> u) {
    double v = 1.0;
    for (std::size_t i = 0; i < u.size(); ++i) v *= std::pow(u[i], al[i]);
    return v;
  };
  const QuadratureResult r = detail::kernel_box_integral(k, g);
  return {r.value, r.error_estimate, r.converged};
}

/// Signed integral of K.
inline double kernel_mass(const Kernel& k) {
  std::vector<int> zero(k.dim(), 0);
  const MomentResult m = signed_moment(k, zero);
  if (!m.converged) throw Error(ErrorCode::QuadratureFailed, "kernel mass quadrature did not converge");
  return m.value;
}

struct OrderEntry {
  std::vector<int> alpha;
  double value = 0.0;
  bool must_vanish = false;
  bool pass = true;
};

struct OrderReport {
  int order = 0;
  double mass = 0.0;
  bool mass_ok = false;
  std::vector<OrderEntry> entries;  // degrees 1..order; degree == order is informational
  bool verified = false;
};

/// Checks int K = 1 and int u^alpha K = 0 for 1 <= |alpha| <= v - 1 (tolerance 1e-8).
inline OrderReport verify_order(const Kernel& k, int v, double tol = 1e-8) {
  detail::require(v >= 1, ErrorCode::InvalidArgument, "order must be >= 1");
  OrderReport rep;
  rep.order = v;
  rep.mass = kernel_mass(k);
  rep.mass_ok = std::abs(rep.mass - 1.0) <= tol;
  rep.verified = rep.mass_ok;
  for (int deg = 1; deg <= v; ++deg) {
    for (auto& alpha : multi_indices(k.dim(), deg)) {
      const MomentResult m = signed_moment(k, alpha);
      if (!m.converged) throw Error(ErrorCode::QuadratureFailed, "moment quadrature did not converge");
      OrderEntry e{alpha, m.value, deg < v, true};
      if (e.must_vanish) e.pass = std::abs(m.value) <= tol;
      rep.verified = rep.verified && e.pass;
      rep.entries.push_back(std::move(e));
    }
  }
  return rep;
}

}  // namespace kdebias
