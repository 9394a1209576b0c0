#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace csiloc {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  Config,
  Infeasible,
  NonConverged,
  ZeroFeature,
  DegenerateConflation,
  ZeroVariance,
  NumericFailure,
  Io,
  MagicMismatch,
  VersionUnsupported,
  ChecksumError,
  Truncated,
};

std::string_view to_string(ErrorCode code);

/// Process exit code for the CLI: 2 config, 3 data, 4 numeric.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace csiloc
