#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kdebias/error.hpp"

namespace kdebias {

/// n points in R^d stored row-major.
class SampleSet {
 public:
  SampleSet(std::size_t dim, std::vector<double> data, std::optional<std::uint64_t> seed = {})
      : dim_(dim), data_(std::move(data)), seed_(seed) {
    detail::require(dim_ >= 1, ErrorCode::DimensionMismatch, "sample dimension must be >= 1");
    detail::require(data_.size() % dim_ == 0, ErrorCode::DimensionMismatch,
                    "sample storage is not a whole number of points");
    detail::require(!data_.empty(), ErrorCode::EmptySamples, "sample set must hold at least one point");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return data_.size() / dim_; }
  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * dim_, dim_);
  }
  const std::vector<double>& data() const noexcept { return data_; }
  std::optional<std::uint64_t> source_seed() const noexcept { return seed_; }

 private:
  std::size_t dim_;
  std::vector<double> data_;
  std::optional<std::uint64_t> seed_;
};

}  // namespace kdebias
