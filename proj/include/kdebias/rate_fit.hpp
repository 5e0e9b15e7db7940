#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "kdebias/error.hpp"

namespace kdebias {

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  std::size_t points = 0;
};

/// Least-squares line through (log x, log y). Non-positive pairs are skipped.
inline LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size(), ErrorCode::DimensionMismatch, "fit inputs differ in length");
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    sx += std::log(x[i]);
    sy += std::log(y[i]);
    ++n;
  }
  if (n < 2) throw Error(ErrorCode::AllPointsExcluded, "fewer than two usable points for a slope fit");
  const double mx = sx / static_cast<double>(n), my = sy / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    const double dx = std::log(x[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y[i]) - my);
  }
  detail::require(sxx > 0.0, ErrorCode::InvalidArgument, "fit abscissae are all equal");
  LogLogFit f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
      const double r = std::log(y[i]) - (f.intercept + f.slope * std::log(x[i]));
      ss += r * r;
    }
    f.slope_stderr = std::sqrt(ss / static_cast<double>(n - 2) / sxx);
  }
  return f;
}

}  // namespace kdebias
