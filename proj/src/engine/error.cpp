#include "attrkit/engine/error.hpp"

namespace attrkit {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::shape_mismatch: return "ShapeMismatch";
    case ErrorCode::unknown_layer_id: return "UnknownLayerId";
    case ErrorCode::target_out_of_range: return "TargetOutOfRange";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::shape_inconsistency: return "ShapeInconsistency";
    case ErrorCode::missing_weight: return "MissingWeight";
    case ErrorCode::invalid_steps: return "InvalidSteps";
    case ErrorCode::invalid_parameter: return "InvalidParameter";
    case ErrorCode::unsupported_layer: return "UnsupportedLayer";
    case ErrorCode::empty_baseline_distribution: return "EmptyBaselineDistribution";
    case ErrorCode::not_a_conv_layer: return "NotAConvLayer";
    case ErrorCode::window_too_large: return "WindowTooLarge";
    case ErrorCode::mask_shape_mismatch: return "MaskShapeMismatch";
    case ErrorCode::insufficient_samples: return "InsufficientSamples";
    case ErrorCode::neuron_out_of_range: return "NeuronOutOfRange";
    case ErrorCode::degenerate_zero_vector: return "DegenerateZeroVector";
    case ErrorCode::zero_perturbation_space: return "ZeroPerturbationSpace";
    case ErrorCode::result_divergence: return "ResultDivergence";
    case ErrorCode::length_mismatch: return "LengthMismatch";
    case ErrorCode::chunk_failure: return "ChunkFailure";
    case ErrorCode::numeric_failure: return "NumericFailure";
    case ErrorCode::io_error: return "IoError";
  }
  return "Unknown";
}

}  // namespace attrkit
