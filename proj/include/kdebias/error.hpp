#pragma once

#include <stdexcept>
#include <string>

namespace kdebias {

enum class ErrorCode {
  // validation
  NotSymmetric,
  NotPositiveDefinite,
  DimensionMismatch,
  EmptySamples,
  OrderUnavailable,
  InvalidArgument,
  // numerical
  MomentDiverged,
  QuadratureFailed,
  MaxSubdivisionsExceeded,
  AllPointsExcluded,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySamples: return "EmptySamples";
    case ErrorCode::OrderUnavailable: return "OrderUnavailable";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MomentDiverged: return "MomentDiverged";
    case ErrorCode::QuadratureFailed: return "QuadratureFailed";
    case ErrorCode::MaxSubdivisionsExceeded: return "MaxSubdivisionsExceeded";
    case ErrorCode::AllPointsExcluded: return "AllPointsExcluded";
  }
  return "Unknown";
}

inline bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::MomentDiverged:
    case ErrorCode::QuadratureFailed:
    case ErrorCode::MaxSubdivisionsExceeded:
    case ErrorCode::AllPointsExcluded:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }
  bool numerical() const noexcept { return is_numerical(code_); }

 private:
  ErrorCode code_;
  std::string message_;
};

namespace detail {
inline void require(bool ok, ErrorCode code, const std::string& message) {
  if (!ok) throw Error(code, message);
}
}  // namespace detail

}  // namespace kdebias
