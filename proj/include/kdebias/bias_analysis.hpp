#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "kdebias/bandwidth.hpp"
#include "kdebias/convolution.hpp"
#include "kdebias/densities.hpp"
#include "kdebias/error.hpp"
#include "kdebias/estimator.hpp"
#include "kdebias/kernels.hpp"
#include "kdebias/parallel.hpp"
#include "kdebias/quadrature.hpp"
#include "kdebias/rate_fit.hpp"
#include "kdebias/summation.hpp"

namespace kdebias {

namespace detail {

inline bool smooth_mixture_path(const Kernel& k, const DensityModel& m) {
  return m.kind() == DensityKind::GaussianMixture && !k.is_spiky();
}

/// int K(u) (f(x - h u) - f(x)) du over the kernel's own region. Avoids the
/// cancellation in (K_h * f)(x) - f(x) when h is small.
inline QuadratureResult centered_bias_integral(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                                               std::span<const double> x, const QuadOptions& opt) {
  const std::size_t d = m.dim();
  const double fx = m.pdf(x);
  const Matrix& hm = h.entries();
  Vector y(d);
  auto f = [&](std::span<const double> u) {
    const double kv = k.eval(u);
    if (kv == 0.0) return 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += hm(i, j) * u[j];
      y[i] = x[i] - s;
    }
    return kv * (m.pdf(y) - fx);
  };
  if (k.kind() == KernelKind::Epanechnikov && d > 1)
    return integrate(f, RegionSpec::ball(Vector(d, 0.0), 1.0), opt);
  const double b = k.box_half_width();
  std::vector<double> lo(d, -b), hi(d, b);
  std::vector<std::vector<double>> breaks(d, symmetric_breaks(k));
  return integrate_box(f, lo, hi, opt, breaks);
}

/// T(h., ..., h.): contracts every slot of the tensor with the symmetric h.
inline SymTensor pull_back(const SymTensor& t, const Matrix& h) {
  const std::size_t d = t.dim();
  SymTensor cur = t;
  std::size_t stride = cur.data().size();
  for (int mode = 0; mode < t.order(); ++mode) {
    stride /= d;
    SymTensor next(d, t.order());
    const auto& src = cur.data();
    auto& dst = next.data();
    for (std::size_t idx = 0; idx < src.size(); ++idx) {
      const std::size_t m = (idx / stride) % d;
      const std::size_t base = idx - m * stride;
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += src[base + i * stride] * h(i, m);
      dst[idx] = s;
    }
    cur = std::move(next);
  }
  return cur;
}

/// Signed moment int u^alpha K(u) du with per-kernel shortcuts. Product kernels
/// factor into 1-d base moments.
class SignedMomentTable {
 public:
  SignedMomentTable(const Kernel& k, int degree) : k_(k), degree_(degree) {
    if (k.is_radial()) {
      const MomentResult r = radial_moment(k, degree, /*absolute=*/false);
      if (!r.converged) throw Error(ErrorCode::MomentDiverged, "radial kernel moment did not converge");
      radial_ = r.value / sphere_area(k.dim());
    } else {
      const Kernel one = Kernel::product(k.base(), 1);
      for (int a = 0; a <= degree; ++a) {
        const int al[1] = {a};
        const MomentResult r = signed_moment(one, al);
        if (!r.converged) throw Error(ErrorCode::QuadratureFailed, "base kernel moment did not converge");
        base_.push_back(r.value);
      }
    }
  }

  double operator()(const std::vector<int>& alpha) {
    auto it = cache_.find(alpha);
    if (it != cache_.end()) return it->second;
    double v;
    if (k_.is_radial()) {
      v = radial_ * sphere_monomial(alpha);
    } else {
      v = 1.0;
      for (int a : alpha) v *= base_[static_cast<std::size_t>(a)];
    }
    cache_.emplace(alpha, v);
    return v;
  }

 private:
  const Kernel& k_;
  int degree_;
  double radial_ = 0.0;
  std::vector<double> base_;
  std::map<std::vector<int>, double> cache_;
};

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for replicate r of cell c; distinct streams for every (seed, c, r).
inline std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t cell, std::uint64_t rep) {
  return splitmix64(splitmix64(splitmix64(seed) ^ cell) + rep);
}

}  // namespace detail

/// K_h * f(x') - f(x').
inline QuadratureResult exact_bias(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                                   std::span<const double> x, const QuadOptions& opt) {
  detail::require(k.dim() == m.dim() && h.dim() == m.dim() && x.size() == m.dim(),
                  ErrorCode::DimensionMismatch, "bias dimensions differ");
  detail::require(m.dim() <= 3, ErrorCode::InvalidArgument, "exact bias limited to d <= 3");
  if (detail::smooth_mixture_path(k, m)) {
    QuadratureResult r = detail::centered_bias_integral(k, h, m, x, opt);
    r.value += m.pdf(x) * (kernel_mass(k) - 1.0);
    return r;
  }
  QuadratureResult r = convolve_at(k, h, m, x, opt);
  r.value -= m.pdf(x);
  return r;
}

inline QuadratureResult exact_bias(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                                   std::span<const double> x) {
  return exact_bias(k, h, m, x, QuadOptions::for_dim(m.dim()));
}

/// mu_0 = f(x')(int K - 1); mu_j = (-1)^j / j! int K(u) D^j f(x')((hu)^j) du.
inline double moment_term(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                          std::span<const double> x, int j) {
  detail::require(k.dim() == m.dim() && h.dim() == m.dim() && x.size() == m.dim(),
                  ErrorCode::DimensionMismatch, "moment term dimensions differ");
  if (j < 0 || j > m.max_deriv_order())
    throw Error(ErrorCode::OrderUnavailable, "moment term order outside analytic range");
  if (j == 0) return m.pdf(x) * (kernel_mass(k) - 1.0);
  detail::require(k.dim() <= 3 || k.is_radial(), ErrorCode::InvalidArgument,
                  "product-kernel moment terms limited to d <= 3");

  const SymTensor g = detail::pull_back(m.deriv_tensor(x, j), h.entries());
  detail::SignedMomentTable mom(k, j);
  const std::size_t d = m.dim();
  std::vector<int> alpha(d);
  CompensatedSum sum;
  for (std::size_t t = 0; t < g.data().size(); ++t) {
    if (g.data()[t] == 0.0) continue;
    std::fill(alpha.begin(), alpha.end(), 0);
    std::size_t r = t;
    for (int s = 0; s < j; ++s) {
      ++alpha[r % d];
      r /= d;
    }
    sum.add(g.data()[t] * mom(alpha));
  }
  const double sign = (j % 2 == 0) ? 1.0 : -1.0;
  return sign / detail::factorial(j) * sum.value();
}

struct BoundComponents {
  double tail_term = 0.0;
  double taylor_term = 0.0;
  double total = 0.0;
};

/// tail = 2 |h|^-1 psi(delta / ||h||); taylor = mu_K(k) / k! * B(delta), C = 1.
inline BoundComponents remainder_bound(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                                       std::span<const double> x, int order, double delta) {
  detail::require(delta > 0.0, ErrorCode::InvalidArgument, "delta must be positive");
  if (order < 0 || order > m.max_deriv_order())
    throw Error(ErrorCode::OrderUnavailable, "bound order outside analytic range");
  BoundComponents b;
  b.tail_term = 2.0 / h.det() * decay_envelope(k, delta / h.op_norm());
  const MomentResult mu = moment(k, order, m.max_deriv_order());
  if (!mu.converged) throw Error(ErrorCode::MomentDiverged, "kernel moment needed for the bound diverged");
  b.taylor_term = mu.value / detail::factorial(order) * deriv_sup_norm(m, x, delta, order);
  b.total = b.tail_term + b.taylor_term;
  return b;
}

/// Default delta = ||h||^(1/2).
inline double choose_delta(const BandwidthMatrix& h) { return std::sqrt(h.op_norm()); }

struct BiasReport {
  Vector x_query;
  Matrix h{1};
  double h_norm = 0.0;
  int k = 2;
  double exact_bias = 0.0;
  double exact_bias_error = 0.0;
  bool converged = true;
  std::vector<double> moment_terms;
  double empirical_remainder = 0.0;
  double delta_used = 0.0;
  BoundComponents bound;
  double bound_total = 0.0;
  double remainder_over_hk = 0.0;  // |R| / ||h||^k
  double remainder_over_h2 = 0.0;  // |R| / ||h||^2
  bool bound_satisfied = false;
  double margin_ratio = 0.0;  // |R| / (bound_total ||h||^k)
};

/// Full bias decomposition at one (x', h). delta <= 0 selects choose_delta(h).
inline BiasReport bias_report(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                              std::span<const double> x, int order, double delta, const QuadOptions& opt) {
  BiasReport r;
  r.x_query.assign(x.begin(), x.end());
  r.h = h.entries();
  r.h_norm = h.op_norm();
  r.k = order;
  const QuadratureResult eb = exact_bias(k, h, m, x, opt);
  r.exact_bias = eb.value;
  r.exact_bias_error = eb.error_estimate;
  r.converged = eb.converged;

  double sum = 0.0;
  for (int j = 0; j <= order; ++j) {
    r.moment_terms.push_back(moment_term(k, h, m, x, j));
    sum += r.moment_terms.back();
  }
  r.empirical_remainder = r.exact_bias - sum;
  r.delta_used = delta > 0.0 ? delta : choose_delta(h);
  r.bound = remainder_bound(k, h, m, x, order, r.delta_used);
  r.bound_total = r.bound.total;
  const double hk = std::pow(r.h_norm, order);
  const double ar = std::abs(r.empirical_remainder);
  r.remainder_over_hk = ar / hk;
  r.remainder_over_h2 = ar / (r.h_norm * r.h_norm);
  r.bound_satisfied = ar <= r.bound_total * hk;
  r.margin_ratio = r.bound_total > 0.0 ? ar / (r.bound_total * hk) : (ar == 0.0 ? 0.0 : INFINITY);
  return r;
}

/// Var f_hat(x') = n^-1 (int K_h(x'-y)^2 f(y) dy - (K_h * f(x'))^2).
inline QuadratureResult variance_exact(const Kernel& k, const BandwidthMatrix& h, const DensityModel& m,
                                       std::span<const double> x, std::size_t n, const QuadOptions& opt) {
  detail::require(n >= 1, ErrorCode::InvalidArgument, "sample size must be >= 1");
  const QuadratureResult second = convolve_pieces(k, h, m, x, opt, 2).total;
  const QuadratureResult first = convolve_at(k, h, m, x, opt);
  const double nn = static_cast<double>(n);
  QuadratureResult r;
  r.value = (second.value / h.det() - first.value * first.value) / nn;
  r.error_estimate = (second.error_estimate / h.det() + 2.0 * std::abs(first.value) * first.error_estimate) / nn;
  r.nodes_used = first.nodes_used + second.nodes_used;
  r.converged = first.converged && second.converged;
  if (r.value < 0.0 && -r.value <= r.error_estimate) r.value = 0.0;
  return r;
}

struct ScalingPoint {
  double h = 0.0;
  double bias = 0.0;
  double error_estimate = 0.0;
  bool converged = true;
  bool included = true;
};

struct BiasScalingResult {
  std::vector<ScalingPoint> points;
  LogLogFit fit;
};

/// Slope of log|bias| against log h for scalar bandwidths h I. Points with
/// |bias| below 10x the absolute quadrature tolerance, or whose quadrature did
/// not converge, are excluded from the fit.
inline BiasScalingResult bias_scaling_study(const Kernel& k, const DensityModel& m, std::span<const double> x,
                                            const std::vector<double>& h_values, const QuadOptions& opt,
                                            unsigned threads = 1) {
  detail::require(h_values.size() >= 5, ErrorCode::InvalidArgument, "need at least 5 bandwidths");
  double lo = h_values.front(), hi = h_values.front();
  for (double v : h_values) {
    detail::require(v > 0.0, ErrorCode::InvalidArgument, "bandwidths must be positive");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  detail::require(hi / lo >= 10.0, ErrorCode::InvalidArgument, "bandwidths must span at least a decade");

  BiasScalingResult out;
  out.points.resize(h_values.size());
  parallel_for(h_values.size(), threads, [&](std::size_t i) {
    const BandwidthMatrix h = BandwidthMatrix::scalar(m.dim(), h_values[i]);
    const QuadratureResult r = exact_bias(k, h, m, x, opt);
    ScalingPoint& p = out.points[i];
    p.h = h_values[i];
    p.bias = r.value;
    p.error_estimate = r.error_estimate;
    p.converged = r.converged;
    p.included = r.converged && std::abs(r.value) >= 10.0 * opt.abs_tol;
  });
  std::vector<double> xs, ys;
  for (const auto& p : out.points) {
    if (!p.included) continue;
    xs.push_back(p.h);
    ys.push_back(std::abs(p.bias));
  }
  if (xs.size() < 2) throw Error(ErrorCode::AllPointsExcluded, "every bandwidth was excluded from the fit");
  out.fit = fit_loglog(xs, ys);
  return out;
}

struct MsePoint {
  std::size_t n = 0;
  double mse = 0.0;
  double mean_bandwidth = 0.0;
};

struct MseStudyResult {
  std::vector<MsePoint> points;
  LogLogFit fit;
};

/// Empirical MSE of f_hat(x') over seeded replicates with the normal-reference
/// bandwidth h = c0 * sigma_hat * n^(-1/(4+d)) I.
inline MseStudyResult mse_study(const Kernel& k, const DensityModel& m, std::span<const double> x,
                                const std::vector<std::size_t>& n_values, std::size_t replicates,
                                std::uint64_t seed, unsigned threads = 1, double c0 = 1.06) {
  detail::require(replicates >= 50, ErrorCode::InvalidArgument, "need at least 50 replicates");
  detail::require(n_values.size() >= 2, ErrorCode::InvalidArgument, "need at least two sample sizes");
  const std::size_t d = m.dim();
  detail::require(x.size() == d && k.dim() == d, ErrorCode::DimensionMismatch, "mse study dimensions differ");
  const double truth = m.pdf(x);
  const std::vector<Vector> queries{Vector(x.begin(), x.end())};
  const std::size_t cells = n_values.size() * replicates;
  std::vector<double> sq(cells), bw(cells);

  parallel_for(cells, threads, [&](std::size_t c) {
    const std::size_t ni = c / replicates, rep = c % replicates;
    const std::size_t n = n_values[ni];
    detail::require(n >= 2, ErrorCode::InvalidArgument, "sample sizes must be >= 2");
    const SampleSet s = sample(m, n, detail::cell_seed(seed, ni, rep));
    // sigma_hat: mean per-coordinate sample standard deviation
    double sigma = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      CompensatedSum s1, s2;
      for (std::size_t t = 0; t < n; ++t) s1.add(s.point(t)[i]);
      const double mean = s1.value() / static_cast<double>(n);
      for (std::size_t t = 0; t < n; ++t) {
        const double dv = s.point(t)[i] - mean;
        s2.add(dv * dv);
      }
      sigma += std::sqrt(s2.value() / static_cast<double>(n - 1));
    }
    sigma /= static_cast<double>(d);
    const double hval = c0 * sigma * std::pow(static_cast<double>(n), -1.0 / (4.0 + static_cast<double>(d)));
    const BandwidthMatrix h = BandwidthMatrix::scalar(d, hval);
    const double est = kde_estimate(s, k, h, queries, 1).front();
    sq[c] = (est - truth) * (est - truth);
    bw[c] = hval;
  });

  MseStudyResult out;
  std::vector<double> xs, ys;
  for (std::size_t ni = 0; ni < n_values.size(); ++ni) {
    const std::span<const double> row(sq.data() + ni * replicates, replicates);
    const std::span<const double> hrow(bw.data() + ni * replicates, replicates);
    const double r = static_cast<double>(replicates);
    MsePoint p{n_values[ni], pairwise_sum(row) / r, pairwise_sum(hrow) / r};
    out.points.push_back(p);
    xs.push_back(static_cast<double>(p.n));
    ys.push_back(p.mse);
  }
  out.fit = fit_loglog(xs, ys);
  return out;
}

}  // namespace kdebias
