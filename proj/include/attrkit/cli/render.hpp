#pragma once

#include <string>
#include <vector>

#include "attrkit/engine/tensor.hpp"

namespace attrkit::cli {

/// Token highlighting: green pulls towards the predicted class, red away,
/// opacity |a| / max |a|. All-zero scores render every token neutral.
/// Throws LengthMismatch when the two sequences differ in length.
std::string render_text_html(const std::vector<std::string>& tokens, const std::vector<double>& scores,
                             const std::string& predicted_class);

// Per-token scores: row sums of a [tokens, dim] attribution.
std::vector<double> token_scores(const Tensor& attribution);

/// Binary PPM (P6) of a 2-D map on a blue-white-red ramp, minimum blue,
/// maximum red. A constant map renders uniformly white.
std::string render_heatmap_ppm(const Tensor& map);

// |a| summed over channels of a [C, H, W] attribution, shaped [H, W].
Tensor channel_abs_sum(const Tensor& attribution);

std::string html_escape(const std::string& s);

}  // namespace attrkit::cli
