#pragma once

// Blow-up of K_h * f(0) for the spike-train kernel under shrinking bandwidths.
//
// The witness density keeps a fixed Gaussian part on the unit ball and puts
// the remaining mass on a tiny bump sitting on one spike of the rescaled
// kernel: at y = lambda_1 n* e_1 with n* = ceil(R / lambda_1), which is the
// point -h u for u on spike n*. The bump radius is chosen so its u-image stays
// inside the central half of that spike, so K_h is at least
// c n*^-p bump(1/2) / |h| over the whole bump.

#include <cmath>
#include <cstddef>
#include <vector>

#include "kdebias/bandwidth.hpp"
#include "kdebias/convolution.hpp"
#include "kdebias/densities.hpp"
#include "kdebias/error.hpp"
#include "kdebias/kernels.hpp"
#include "kdebias/parallel.hpp"
#include "kdebias/rate_fit.hpp"

namespace kdebias {

/// lambda_1^p / prod lambda_i.
inline double predicted_rate(std::span<const double> eigs, double p) {
  detail::require(!eigs.empty(), ErrorCode::InvalidArgument, "need at least one eigenvalue");
  double prod = 1.0;
  for (double l : eigs) {
    detail::require(l > 0.0, ErrorCode::InvalidArgument, "eigenvalues must be positive");
    prod *= l;
  }
  return std::pow(eigs[0], p) / prod;
}

enum class ScheduleKind { Balanced, Unbalanced };

inline const char* to_string(ScheduleKind s) { return s == ScheduleKind::Balanced ? "balanced" : "unbalanced"; }

/// Descending eigenvalues for one step: all eps (balanced) or eps^i (unbalanced).
inline std::vector<double> schedule_eigenvalues(ScheduleKind kind, std::size_t d, double eps) {
  std::vector<double> l(d);
  for (std::size_t i = 0; i < d; ++i)
    l[i] = kind == ScheduleKind::Balanced ? eps : std::pow(eps, static_cast<double>(i + 1));
  return l;
}

struct SpikeWitness {
  long spike = 0;
  Vector center;
  double radius = 0.0;
  double lower_envelope = 0.0;  // far mass * min of K_h over the bump
};

/// Witness for a diagonal bandwidth with eigenvalues `eigs` (top axis first).
inline SpikeWitness spike_witness(const Kernel& k, std::span<const double> eigs, double far_radius = 1.05,
                                  double inner_mass = 0.5) {
  detail::require(k.is_spiky(), ErrorCode::InvalidArgument, "witness needs the spike-train kernel");
  detail::require(far_radius > 1.0, ErrorCode::InvalidArgument, "far radius must exceed 1");
  const AdversarialParams& a = k.adversarial_params();
  const std::size_t d = eigs.size();
  const double l1 = eigs[0];
  double lmin = l1, det = 1.0;
  for (double l : eigs) {
    lmin = std::min(lmin, l);
    det *= l;
  }
  SpikeWitness w;
  w.spike = std::max(2L, static_cast<long>(std::ceil(far_radius / l1)));
  if (w.spike > a.n_max) throw Error(ErrorCode::InvalidArgument, "bandwidth too small for the spike truncation");
  const double n = static_cast<double>(w.spike);
  const double s = 0.5 * k.spike_half_width(n);
  w.radius = 0.9 * s * lmin;
  // keep the bump clear of the unit ball
  w.radius = std::min(w.radius, 0.5 * (l1 * n - 1.0));
  w.center.assign(d, 0.0);
  w.center[0] = l1 * n;
  w.lower_envelope = (1.0 - inner_mass) * a.c * std::pow(n, -a.p) * bump(0.5) / det;
  return w;
}

struct BlowupRun {
  AdversarialParams params;
  ScheduleKind schedule = ScheduleKind::Balanced;
  std::vector<double> eps;
  std::vector<std::vector<double>> eig_schedule;
  std::vector<SpikeWitness> witnesses;
  std::vector<double> values;
  std::vector<double> errors;
  std::vector<bool> converged;
  std::vector<double> predicted;
  std::size_t excluded = 0;
  bool envelope_ok = true;       // value >= lower envelope at every step
  bool strictly_increasing = true;
  LogLogFit fit;                 // value vs eps
  LogLogFit predicted_fit;       // predicted_rate vs eps
};

/// K_h * f(0) along an eigenvalue schedule (d <= 2). Steps whose quadrature did
/// not converge are left out of the fit; more than 20% of them is an error.
inline BlowupRun blowup_sweep(const AdversarialParams& params, ScheduleKind kind, const std::vector<double>& eps_values,
                              double far_radius, const QuadOptions& opt, unsigned threads = 1) {
  detail::require(params.dim >= 1 && params.dim <= 2, ErrorCode::InvalidArgument, "sweeps support d <= 2");
  detail::require(eps_values.size() >= 2, ErrorCode::InvalidArgument, "need at least two steps");
  for (std::size_t i = 0; i < eps_values.size(); ++i) {
    detail::require(eps_values[i] > 0.0 && eps_values[i] < 1.0, ErrorCode::InvalidArgument, "eps must lie in (0, 1)");
    if (i > 0)
      detail::require(eps_values[i] < eps_values[i - 1], ErrorCode::InvalidArgument, "eps must strictly decrease");
  }
  const Kernel k = Kernel::adversarial(params);
  const std::size_t d = params.dim;
  const std::size_t steps = eps_values.size();

  BlowupRun run;
  run.params = k.adversarial_params();
  run.schedule = kind;
  run.eps = eps_values;
  run.eig_schedule.resize(steps);
  run.witnesses.resize(steps);
  run.values.resize(steps);
  run.errors.resize(steps);
  run.converged.resize(steps);
  run.predicted.resize(steps);

  parallel_for(steps, threads, [&](std::size_t i) {
    const std::vector<double> eigs = schedule_eigenvalues(kind, d, eps_values[i]);
    const BandwidthMatrix h = BandwidthMatrix::diagonal(eigs);
    const SpikeWitness w = spike_witness(k, eigs, far_radius);
    const DensityModel m = DensityModel::far_mass_at(w.center, w.radius);
    const Vector origin(d, 0.0);
    const QuadratureResult r = convolve_at(k, h, m, origin, opt);
    run.eig_schedule[i] = eigs;
    run.witnesses[i] = w;
    run.values[i] = r.value;
    run.errors[i] = r.error_estimate;
    run.converged[i] = r.converged;
    run.predicted[i] = predicted_rate(eigs, params.p);
  });

  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < steps; ++i) {
    if (!run.converged[i] || !std::isfinite(run.values[i])) {
      ++run.excluded;
      continue;
    }
    xs.push_back(eps_values[i]);
    ys.push_back(run.values[i]);
    if (run.values[i] < run.witnesses[i].lower_envelope) run.envelope_ok = false;
  }
  for (std::size_t i = 1; i < steps; ++i)
    if (!(run.values[i] > run.values[i - 1])) run.strictly_increasing = false;
  if (5 * run.excluded > steps)
    throw Error(ErrorCode::QuadratureFailed, "more than 20% of sweep steps failed to converge");
  run.fit = fit_loglog(xs, ys);
  run.predicted_fit = fit_loglog(eps_values, run.predicted);
  return run;
}

struct MomentFinitenessRow {
  int j = 0;
  double value = 0.0;           // truncation n_max
  double value_2n = 0.0;        // 2 n_max
  double value_4n = 0.0;        // 4 n_max
  double rel_change_2n = 0.0;
  double rel_change_4n = 0.0;
  bool converged = false;       // both changes below 1e-6
};

/// Radial moments of the normalized spike-train kernel under truncation doubling.
inline std::vector<MomentFinitenessRow> moment_finiteness_report(const AdversarialParams& params, int j_max) {
  detail::require(j_max >= 0 && j_max <= params.ell, ErrorCode::InvalidArgument, "j_max must lie in [0, ell]");
  const AdversarialParams a = normalize_adversarial(params);
  std::vector<MomentFinitenessRow> rows;
  for (int j = 0; j <= j_max; ++j) {
    MomentFinitenessRow r;
    r.j = j;
    const QuadratureResult base = detail::spike_series(a, j, 2, a.n_max);
    const QuadratureResult t2 = detail::spike_series(a, j, a.n_max + 1, 2 * a.n_max);
    const QuadratureResult t4 = detail::spike_series(a, j, 2 * a.n_max + 1, 4 * a.n_max);
    r.value = base.value;
    r.value_2n = base.value + t2.value;
    r.value_4n = r.value_2n + t4.value;
    if (!std::isfinite(r.value_4n)) throw Error(ErrorCode::MomentDiverged, "spike-train moment is not finite");
    r.rel_change_2n = std::abs(r.value_2n - r.value) / std::abs(r.value_2n);
    r.rel_change_4n = std::abs(r.value_4n - r.value_2n) / std::abs(r.value_4n);
    r.converged = base.converged && t2.converged && t4.converged && r.rel_change_2n < 1e-6 && r.rel_change_4n < 1e-6;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace kdebias
