#pragma once

// Deterministic adaptive Gauss-Legendre cubature for d <= 3, plus the radial
// reductions used for kernel moments.
//
// The adaptive engine keeps a global heap of cells. Each cell carries its own
// m^d-point tensor estimate and the sum of its 2^d children's estimates; the
// cell value is the children sum and its error is the two-level difference.
// The worst cell is split until the summed error meets the tolerance. The
// whole procedure is sequential with id-based tie breaking, so results are
// reproducible bit for bit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <queue>
#include <span>
#include <vector>

#include "kdebias/error.hpp"
#include "kdebias/summation.hpp"

namespace kdebias {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t nodes_used = 0;
  bool converged = true;

  QuadratureResult& operator+=(const QuadratureResult& o) {
    value += o.value;
    error_estimate += o.error_estimate;
    nodes_used += o.nodes_used;
    converged = converged && o.converged;
    return *this;
  }
};

struct QuadOptions {
  double rel_tol = 1e-9;
  double abs_tol = 1e-14;
  int max_depth = 40;
  std::size_t max_regions = 200000;
  int nodes_per_axis = 0;  // 0: pick by dimension

  static QuadOptions for_dim(std::size_t d) {
    QuadOptions o;
    if (d <= 1) {
      o.rel_tol = 1e-9;
      o.abs_tol = 1e-14;
    } else if (d == 2) {
      o.rel_tol = 1e-7;
      o.abs_tol = 1e-12;
    } else {
      o.rel_tol = 1e-6;
      o.abs_tol = 1e-10;
    }
    return o;
  }

  double target(double value) const { return std::max(abs_tol, rel_tol * std::abs(value)); }
};

struct GaussLegendreRule {
  std::vector<double> x;
  std::vector<double> w;
  int size() const { return static_cast<int>(x.size()); }
};

namespace detail {

inline GaussLegendreRule make_gauss_legendre(int m) {
  GaussLegendreRule r;
  r.x.resize(m);
  r.w.resize(m);
  for (int i = 0; i < (m + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= m; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = m * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) {
        // refresh derivative at the converged root
        p0 = 1.0;
        p1 = 0.0;
        for (int k = 1; k <= m; ++k) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
        }
        dp = m * (z * p0 - p1) / (z * z - 1.0);
        break;
      }
    }
    r.x[i] = -z;
    r.x[m - 1 - i] = z;
    r.w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    r.w[m - 1 - i] = r.w[i];
  }
  if (m % 2 == 1) r.x[m / 2] = 0.0;
  return r;
}

}  // namespace detail

/// Gauss-Legendre nodes and weights on [-1, 1], 1 <= m <= 64.
inline const GaussLegendreRule& gauss_legendre(int m) {
  static const std::vector<GaussLegendreRule> table = [] {
    std::vector<GaussLegendreRule> t(65);
    for (int k = 1; k <= 64; ++k) t[k] = detail::make_gauss_legendre(k);
    return t;
  }();
  detail::require(m >= 1 && m <= 64, ErrorCode::InvalidArgument, "Gauss-Legendre order out of range");
  return table[m];
}

namespace detail {

inline int default_nodes(std::size_t d) { return d <= 1 ? 10 : (d == 2 ? 7 : 5); }

template <class F>
double tensor_rule(F& f, std::size_t d, const double* lo, const double* hi,
                   const GaussLegendreRule& g, std::size_t& evals) {
  const int m = g.size();
  std::array<double, 3> mid{}, half{}, x{};
  double jac = 1.0;
  int total = 1;
  for (std::size_t k = 0; k < d; ++k) {
    mid[k] = 0.5 * (lo[k] + hi[k]);
    half[k] = 0.5 * (hi[k] - lo[k]);
    jac *= half[k];
    total *= m;
  }
  double sum = 0.0;
  for (int t = 0; t < total; ++t) {
    int r = t;
    double w = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      const int i = r % m;
      r /= m;
      x[k] = mid[k] + half[k] * g.x[i];
      w *= g.w[i];
    }
    sum += w * f(std::span<const double>(x.data(), d));
  }
  evals += static_cast<std::size_t>(total);
  return sum * jac;
}

struct Cell {
  std::array<double, 3> lo{}, hi{};
  int depth = 0;
  std::uint64_t id = 0;
  std::array<double, 8> child{};
  double value = 0.0;
  double error = 0.0;
};

inline void child_box(const Cell& c, std::size_t d, unsigned which, double* lo, double* hi) {
  for (std::size_t k = 0; k < d; ++k) {
    const double mid = 0.5 * (c.lo[k] + c.hi[k]);
    if ((which >> k) & 1u) {
      lo[k] = mid;
      hi[k] = c.hi[k];
    } else {
      lo[k] = c.lo[k];
      hi[k] = mid;
    }
  }
}

template <class F>
void evaluate_cell(F& f, std::size_t d, Cell& c, double coarse, const GaussLegendreRule& g,
                   std::size_t& evals) {
  const unsigned nchild = 1u << d;
  CompensatedSum s;
  for (unsigned w = 0; w < nchild; ++w) {
    std::array<double, 3> lo{}, hi{};
    child_box(c, d, w, lo.data(), hi.data());
    c.child[w] = tensor_rule(f, d, lo.data(), hi.data(), g, evals);
    s.add(c.child[w]);
  }
  c.value = s.value();
  c.error = std::abs(coarse - c.value);
}

}  // namespace detail

/// Adaptive tensor Gauss-Legendre over the box [lo, hi] (d <= 3). Optional
/// per-axis breakpoints seed the initial partition. A non-converged result is
/// returned with converged = false rather than thrown.
template <class F>
QuadratureResult integrate_box(F&& f, std::span<const double> lo, std::span<const double> hi,
                               const QuadOptions& opt,
                               const std::vector<std::vector<double>>& breakpoints = {}) {
  const std::size_t d = lo.size();
  detail::require(d >= 1 && d <= 3 && hi.size() == d, ErrorCode::DimensionMismatch,
                  "tensor cubature supports 1 <= d <= 3");
  for (std::size_t k = 0; k < d; ++k)
    detail::require(hi[k] > lo[k], ErrorCode::InvalidArgument, "degenerate integration box");
  detail::require(opt.rel_tol > 0.0 || opt.abs_tol > 0.0, ErrorCode::InvalidArgument,
                  "tolerance must be positive");

  const GaussLegendreRule& g =
      gauss_legendre(opt.nodes_per_axis > 0 ? opt.nodes_per_axis : detail::default_nodes(d));

  // Initial grid from breakpoints.
  std::vector<std::vector<double>> edges(d);
  for (std::size_t k = 0; k < d; ++k) {
    edges[k].push_back(lo[k]);
    if (k < breakpoints.size()) {
      std::vector<double> b = breakpoints[k];
      std::sort(b.begin(), b.end());
      for (double x : b)
        if (x > edges[k].back() && x < hi[k]) edges[k].push_back(x);
    }
    edges[k].push_back(hi[k]);
  }

  QuadratureResult res;
  std::vector<detail::Cell> cells;
  std::uint64_t next_id = 0;

  auto cmp = [&cells](std::size_t a, std::size_t b) {
    if (cells[a].error != cells[b].error) return cells[a].error < cells[b].error;
    return cells[a].id > cells[b].id;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> heap(cmp);

  double total_value = 0.0, total_error = 0.0;

  {
    std::array<std::size_t, 3> counts{1, 1, 1};
    std::size_t ncells = 1;
    for (std::size_t k = 0; k < d; ++k) {
      counts[k] = edges[k].size() - 1;
      ncells *= counts[k];
    }
    for (std::size_t t = 0; t < ncells; ++t) {
      detail::Cell c;
      std::size_t r = t;
      for (std::size_t k = 0; k < d; ++k) {
        const std::size_t i = r % counts[k];
        r /= counts[k];
        c.lo[k] = edges[k][i];
        c.hi[k] = edges[k][i + 1];
      }
      c.id = next_id++;
      const double coarse = detail::tensor_rule(f, d, c.lo.data(), c.hi.data(), g, res.nodes_used);
      detail::evaluate_cell(f, d, c, coarse, g, res.nodes_used);
      total_value += c.value;
      total_error += c.error;
      cells.push_back(c);
      heap.push(cells.size() - 1);
    }
  }

  std::vector<std::size_t> frozen;
  std::vector<bool> retired;
  retired.resize(cells.size(), false);
  const unsigned nchild = 1u << d;
  std::size_t iter = 0;

  while (!heap.empty()) {
    if (total_error <= opt.target(total_value)) break;
    if (cells.size() + nchild > opt.max_regions) break;
    const std::size_t worst = heap.top();
    heap.pop();
    if (cells[worst].depth >= opt.max_depth) {
      frozen.push_back(worst);
      continue;
    }
    const detail::Cell parent = cells[worst];
    retired[worst] = true;
    total_value -= parent.value;
    total_error -= parent.error;
    for (unsigned w = 0; w < nchild; ++w) {
      detail::Cell c;
      detail::child_box(parent, d, w, c.lo.data(), c.hi.data());
      c.depth = parent.depth + 1;
      c.id = next_id++;
      detail::evaluate_cell(f, d, c, parent.child[w], g, res.nodes_used);
      total_value += c.value;
      total_error += c.error;
      cells.push_back(c);
      retired.push_back(false);
      heap.push(cells.size() - 1);
    }
    if (++iter % 512 == 0) {
      // resynchronise running totals
      CompensatedSum v, e;
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (!retired[i]) {
          v.add(cells[i].value);
          e.add(cells[i].error);
        }
      total_value = v.value();
      total_error = e.value();
    }
  }

  CompensatedSum v, e;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!retired[i]) {
      v.add(cells[i].value);
      e.add(cells[i].error);
    }
  res.value = v.value();
  res.error_estimate = e.value();
  res.converged = std::isfinite(res.value) && res.error_estimate <= opt.target(res.value);
  return res;
}

/// One-dimensional convenience wrapper; f takes a double.
template <class F>
QuadratureResult integrate_interval(F&& f, double a, double b, const QuadOptions& opt,
                                    std::vector<double> breakpoints = {}) {
  if (b == a) return {};
  const double sign = b > a ? 1.0 : -1.0;
  const double lo = std::min(a, b), hi = std::max(a, b);
  auto g = [&f](std::span<const double> x) { return f(x[0]); };
  std::vector<std::vector<double>> br;
  if (!breakpoints.empty()) br.push_back(std::move(breakpoints));
  QuadratureResult r = integrate_box(g, std::span<const double>(&lo, 1),
                                     std::span<const double>(&hi, 1), opt, br);
  r.value *= sign;
  return r;
}

/// Integration region: an axis-aligned box, a ball, or a spherical shell.
struct RegionSpec {
  enum class Kind { Box, Ball, Annulus };

  Kind kind = Kind::Box;
  std::size_t dim = 1;
  std::vector<double> lo, hi;     // Box
  std::vector<double> center;     // Ball / Annulus
  double r_inner = 0.0, r_outer = 0.0;

  static RegionSpec box(std::vector<double> lo, std::vector<double> hi) {
    detail::require(lo.size() == hi.size() && !lo.empty(), ErrorCode::DimensionMismatch, "box bounds");
    for (std::size_t k = 0; k < lo.size(); ++k)
      detail::require(hi[k] > lo[k], ErrorCode::InvalidArgument, "degenerate box");
    RegionSpec r;
    r.kind = Kind::Box;
    r.dim = lo.size();
    r.lo = std::move(lo);
    r.hi = std::move(hi);
    return r;
  }

  static RegionSpec ball(std::vector<double> center, double radius) {
    detail::require(radius > 0.0, ErrorCode::InvalidArgument, "ball radius must be positive");
    RegionSpec r;
    r.kind = Kind::Ball;
    r.dim = center.size();
    r.center = std::move(center);
    r.r_outer = radius;
    return r;
  }

  static RegionSpec annulus(std::vector<double> center, double r0, double r1) {
    detail::require(r0 >= 0.0 && r1 > r0, ErrorCode::InvalidArgument, "annulus radii");
    RegionSpec r;
    r.kind = Kind::Annulus;
    r.dim = center.size();
    r.center = std::move(center);
    r.r_inner = r0;
    r.r_outer = r1;
    return r;
  }
};

/// Integrates f over a region. Balls and shells use spherical coordinates
/// (d = 2, 3) or the two half-lines (d = 1). `radial_breaks` are extra radii
/// at which the radial axis is split (ball/shell only).
template <class F>
QuadratureResult integrate(F&& f, const RegionSpec& region, const QuadOptions& opt,
                           std::vector<double> radial_breaks = {}) {
  const std::size_t d = region.dim;
  detail::require(d >= 1 && d <= 3, ErrorCode::DimensionMismatch, "integrate supports d <= 3");
  if (region.kind == RegionSpec::Kind::Box)
    return integrate_box(f, region.lo, region.hi, opt);

  const auto& c = region.center;
  std::vector<std::vector<double>> br{std::move(radial_breaks)};
  const double r0 = region.kind == RegionSpec::Kind::Ball ? 0.0 : region.r_inner;
  const double r1 = region.r_outer;

  if (d == 1) {
    auto g = [&](std::span<const double> t) {
      const double r = t[0];
      double xp[3] = {c[0] + r, 0.0, 0.0}, xm[3] = {c[0] - r, 0.0, 0.0};
      return f(std::span<const double>(xp, 1)) + f(std::span<const double>(xm, 1));
    };
    const double lo[3] = {r0, 0.0, 0.0}, hi[3] = {r1, 0.0, 0.0};
    return integrate_box(g, std::span<const double>(lo, 1), std::span<const double>(hi, 1), opt, br);
  }
  if (d == 2) {
    auto g = [&](std::span<const double> t) {
      const double r = t[0], th = t[1];
      double x[2] = {c[0] + r * std::cos(th), c[1] + r * std::sin(th)};
      return f(std::span<const double>(x, 2)) * r;
    };
    const double lo[3] = {r0, 0.0, 0.0}, hi[3] = {r1, 2.0 * std::numbers::pi, 0.0};
    return integrate_box(g, std::span<const double>(lo, 2), std::span<const double>(hi, 2), opt, br);
  }
  auto g = [&](std::span<const double> t) {
    const double r = t[0], th = t[1], ph = t[2];
    const double st = std::sin(th);
    double x[3] = {c[0] + r * st * std::cos(ph), c[1] + r * st * std::sin(ph), c[2] + r * std::cos(th)};
    return f(std::span<const double>(x, 3)) * r * r * st;
  };
  const double lo[3] = {r0, 0.0, 0.0}, hi[3] = {r1, std::numbers::pi, 2.0 * std::numbers::pi};
  return integrate_box(g, std::span<const double>(lo, 3), std::span<const double>(hi, 3), opt, br);
}

/// Surface area of the unit sphere S^{d-1} in R^d.
inline double sphere_area(std::size_t d) {
  const double h = 0.5 * static_cast<double>(d);
  return 2.0 * std::pow(std::numbers::pi, h) / std::tgamma(h);
}

/// S_{d-1} * int_0^inf r^(d+j-1) profile(r) dr. The integral over [0, R0]
/// (R0 = last breakpoint) is extended by doubling the truncation radius until
/// the added shell changes the total by less than opt.rel_tol relative.
/// Throws MomentDiverged if the doubling never settles.
template <class F>
QuadratureResult integrate_radial(F&& profile, std::size_t d, int j, std::vector<double> breakpoints,
                                  const QuadOptions& opt, int max_doublings = 60) {
  detail::require(!breakpoints.empty() && breakpoints.back() > 0.0, ErrorCode::InvalidArgument,
                  "integrate_radial needs a positive initial truncation radius");
  std::sort(breakpoints.begin(), breakpoints.end());
  const double power = static_cast<double>(d) + j - 1.0;
  auto g = [&](double r) {
    const double v = profile(r);
    return v == 0.0 ? 0.0 : std::pow(r, power) * v;
  };
  double radius = breakpoints.back();
  breakpoints.pop_back();
  QuadratureResult total = integrate_interval(g, 0.0, radius, opt, breakpoints);
  bool settled = false;
  for (int k = 0; k < max_doublings; ++k) {
    const QuadratureResult shell = integrate_interval(g, radius, 2.0 * radius, opt);
    total += shell;
    radius *= 2.0;
    if (!std::isfinite(total.value)) break;
    if (std::abs(shell.value) <= opt.rel_tol * std::abs(total.value) + opt.abs_tol) {
      settled = true;
      break;
    }
  }
  if (!settled) throw Error(ErrorCode::MomentDiverged, "radial integral does not settle under truncation doubling");
  const double s = sphere_area(d);
  total.value *= s;
  total.error_estimate *= s;
  return total;
}

/// A radial support piece [center - half_width, center + half_width], integrated
/// in the local offset coordinate so narrow pieces far from the origin keep
/// full precision.
struct RadialSegment {
  double center = 0.0;
  double half_width = 0.0;
};

/// S_{d-1} * sum over segments of int (c + o)^(d+j-1) local(c, o) do, with the
/// offset o in [-half_width, half_width]. Segments are summed from last to
/// first (small tail terms first) with compensation.
template <class F>
QuadratureResult integrate_radial_segments(F&& local, std::size_t d, int j,
                                           std::span<const RadialSegment> segments,
                                           const QuadOptions& opt) {
  const double power = static_cast<double>(d) + j - 1.0;
  QuadratureResult out;
  CompensatedSum value, error;
  for (std::size_t i = segments.size(); i-- > 0;) {
    const RadialSegment& s = segments[i];
    if (!(s.half_width > 0.0)) continue;
    auto g = [&](double o) {
      const double v = local(s.center, o);
      return v == 0.0 ? 0.0 : std::pow(s.center + o, power) * v;
    };
    const QuadratureResult r = integrate_interval(g, -s.half_width, s.half_width, opt);
    value.add(r.value);
    error.add(r.error_estimate);
    out.nodes_used += r.nodes_used;
    out.converged = out.converged && r.converged;
  }
  const double area = sphere_area(d);
  out.value = area * value.value();
  out.error_estimate = area * error.value();
  return out;
}

}  // namespace kdebias
