#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "kdebias/bandwidth.hpp"
#include "kdebias/error.hpp"
#include "kdebias/kernels.hpp"
#include "kdebias/parallel.hpp"
#include "kdebias/sample_set.hpp"
#include "kdebias/summation.hpp"

namespace kdebias {

/// K_h(u) = |h|^-1 K(h^-1 u).
inline double scaled_kernel_eval(const Kernel& k, const BandwidthMatrix& h, std::span<const double> u) {
  detail::require(u.size() == k.dim() && h.dim() == k.dim(), ErrorCode::DimensionMismatch,
                  "scaled kernel dimension");
  const Vector v = h.apply_inverse(u);
  return k.eval(v) / h.det();
}

/// Sample indices sorted lexicographically by coordinates. Summing in this
/// order makes the estimate independent of the input order.
inline std::vector<std::size_t> canonical_order(const SampleSet& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&s](std::size_t a, std::size_t b) {
    const auto pa = s.point(a), pb = s.point(b);
    return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
  });
  return idx;
}

/// f_hat(x') = n^-1 sum_i K_h(x' - x_i) at every query. Queries run in
/// parallel; each inner sum uses the fixed pairwise tree over the canonical
/// sample order, so results are bit-identical for any thread count.
inline std::vector<double> kde_estimate(const SampleSet& samples, const Kernel& k, const BandwidthMatrix& h,
                                        const std::vector<Vector>& queries, unsigned threads = 1) {
  const std::size_t d = samples.dim();
  detail::require(k.dim() == d && h.dim() == d, ErrorCode::DimensionMismatch,
                  "sample, kernel and bandwidth dimensions differ");
  for (const auto& q : queries)
    detail::require(q.size() == d, ErrorCode::DimensionMismatch, "query dimension");

  const std::vector<std::size_t> order = canonical_order(samples);
  const double inv_det = 1.0 / h.det();
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  std::vector<double> out(queries.size(), 0.0);

  parallel_for(queries.size(), threads, [&](std::size_t qi) {
    std::vector<double> terms(order.size());
    const Matrix& inv = h.inverse();
    Vector diff(d), u(d);
    for (std::size_t t = 0; t < order.size(); ++t) {
      const auto x = samples.point(order[t]);
      for (std::size_t i = 0; i < d; ++i) diff[i] = queries[qi][i] - x[i];
      for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += inv(i, j) * diff[j];
        u[i] = s;
      }
      terms[t] = k.eval(u) * inv_det;
    }
    out[qi] = pairwise_sum(terms) * inv_n;
  });
  return out;
}

}  // namespace kdebias
