#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attrkit {

enum class ErrorCode {
  shape_mismatch,
  unknown_layer_id,
  target_out_of_range,
  parse_error,
  shape_inconsistency,
  missing_weight,
  invalid_steps,
  invalid_parameter,
  unsupported_layer,
  empty_baseline_distribution,
  not_a_conv_layer,
  window_too_large,
  mask_shape_mismatch,
  insufficient_samples,
  neuron_out_of_range,
  degenerate_zero_vector,
  zero_perturbation_space,
  result_divergence,
  length_mismatch,
  chunk_failure,
  numeric_failure,
  io_error,
};

std::string_view error_code_name(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The description without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace attrkit
