#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace w2s {

enum class ErrorCode {
  QuadratureUnderresolved,
  NoSignal,
  OverlapNotPsd,
  DimensionOverflow,
  NotUnit,
  DegenerateStep,
  AmbiguousSign,
  NanDetected,
  EmptyFilter,
  EigensolveStalled,
  SingularSystem,
  ParseError,
  ValidationError,
  MalformedTrace,
  InvalidArgument,
  Io,
};

/// Stable kebab-case name used in messages and CLI diagnostics.
std::string_view error_code_name(ErrorCode code) noexcept;

/// Single exception type for the library; the code names the failed contract.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace w2s
