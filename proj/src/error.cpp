#include "csiloc/error.hpp"

namespace csiloc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::NonConverged: return "NonConverged";
    case ErrorCode::ZeroFeature: return "ZeroFeature";
    case ErrorCode::DegenerateConflation: return "DegenerateConflation";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::NumericFailure: return "NumericFailure";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::ChecksumError: return "ChecksumError";
    case ErrorCode::Truncated: return "Truncated";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
      return 2;
    case ErrorCode::Infeasible:
    case ErrorCode::NonConverged:
    case ErrorCode::ZeroFeature:
    case ErrorCode::DegenerateConflation:
    case ErrorCode::ZeroVariance:
    case ErrorCode::NumericFailure:
      return 4;
    default:
      return 3;
  }
}

}  // namespace csiloc
