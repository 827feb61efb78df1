#pragma once

#include "attrkit/engine/error.hpp"

namespace attrkit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitModel = 2;
inline constexpr int kExitNumeric = 3;

// Model artifacts that fail to load or validate exit 2; non-finite or
// diverging numbers exit 3; everything else is a configuration error.
inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse_error:
    case ErrorCode::shape_inconsistency:
    case ErrorCode::missing_weight:
    case ErrorCode::unsupported_layer:
    case ErrorCode::io_error:
      return kExitModel;
    case ErrorCode::numeric_failure:
    case ErrorCode::degenerate_zero_vector:
    case ErrorCode::result_divergence:
      return kExitNumeric;
    default:
      return kExitConfig;
  }
}

}  // namespace attrkit::cli
