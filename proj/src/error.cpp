#include "w2s/error.hpp"

namespace w2s {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::QuadratureUnderresolved: return "quadrature-underresolved";
    case ErrorCode::NoSignal: return "no-signal";
    case ErrorCode::OverlapNotPsd: return "overlap-not-psd";
    case ErrorCode::DimensionOverflow: return "dimension-overflow";
    case ErrorCode::NotUnit: return "not-unit";
    case ErrorCode::DegenerateStep: return "degenerate-step";
    case ErrorCode::AmbiguousSign: return "ambiguous-sign";
    case ErrorCode::NanDetected: return "nan-detected";
    case ErrorCode::EmptyFilter: return "empty-filter";
    case ErrorCode::EigensolveStalled: return "eigensolve-stalled";
    case ErrorCode::SingularSystem: return "singular-system";
    case ErrorCode::ParseError: return "parse-error";
    case ErrorCode::ValidationError: return "validation-error";
    case ErrorCode::MalformedTrace: return "malformed-trace";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

}  // namespace w2s
