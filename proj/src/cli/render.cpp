#include "attrkit/cli/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "attrkit/engine/error.hpp"

namespace attrkit::cli {

std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_text_html(const std::vector<std::string>& tokens, const std::vector<double>& scores,
                             const std::string& predicted_class) {
  if (tokens.size() != scores.size()) {
    throw Error(ErrorCode::length_mismatch, std::to_string(tokens.size()) + " tokens but " +
                                                std::to_string(scores.size()) + " scores");
  }
  double peak = 0.0;
  for (double s : scores) peak = std::max(peak, std::abs(s));

  std::string body;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const double alpha = peak > 0.0 ? std::abs(scores[i]) / peak : 0.0;
    char color[64];
    if (alpha == 0.0) {
      std::snprintf(color, sizeof color, "rgba(255, 255, 255, 0)");
    } else if (scores[i] > 0.0) {
      std::snprintf(color, sizeof color, "rgba(0, 160, 0, %.4f)", alpha);
    } else {
      std::snprintf(color, sizeof color, "rgba(220, 0, 0, %.4f)", alpha);
    }
    char score[32];
    std::snprintf(score, sizeof score, "%.6g", scores[i]);
    body += "<span class=\"token\" style=\"background-color: " + std::string(color) + "\" title=\"" + score + "\">" +
            html_escape(tokens[i]) + "</span>\n";
  }
  return "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Token attribution</title>\n"
         "<style>.token{padding:2px 4px;margin:1px;border-radius:3px;font-family:monospace}</style></head>\n"
         "<body><p>Predicted class: <b>" +
         html_escape(predicted_class) + "</b></p>\n<p>\n" + body + "</p></body></html>\n";
}

std::vector<double> token_scores(const Tensor& attribution) {
  const auto& shape = attribution.shape();
  if (shape.empty()) return {attribution[0]};
  const auto rows = static_cast<std::size_t>(shape[0]);
  const auto width = rows == 0 ? 0 : attribution.size() / rows;
  std::vector<double> out(rows, 0.0);
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t d = 0; d < width; ++d) out[t] += attribution[t * width + d];
  }
  return out;
}

Tensor channel_abs_sum(const Tensor& attribution) {
  const auto& s = attribution.shape();
  if (s.size() != 3) throw Error(ErrorCode::shape_mismatch, "expected [C, H, W], got " + shape_string(s));
  const auto plane = static_cast<std::size_t>(s[1] * s[2]);
  std::vector<double> out(plane, 0.0);
  for (std::int64_t c = 0; c < s[0]; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[i] += std::abs(attribution[static_cast<std::size_t>(c) * plane + i]);
  }
  return Tensor({s[1], s[2]}, std::move(out));
}

std::string render_heatmap_ppm(const Tensor& map) {
  if (map.rank() != 2) throw Error(ErrorCode::shape_mismatch, "heatmap needs a 2-D map, got " + shape_string(map.shape()));
  const auto h = map.shape()[0], w = map.shape()[1];
  const auto [lo_it, hi_it] = std::minmax_element(map.values().begin(), map.values().end());
  const double lo = map.size() ? *lo_it : 0.0, hi = map.size() ? *hi_it : 0.0;

  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (double v : map.values()) {
    const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    // Blue (0) -> white (0.5) -> red (1).
    const double r = t < 0.5 ? 2.0 * t : 1.0;
    const double b = t < 0.5 ? 1.0 : 2.0 * (1.0 - t);
    const double g = t < 0.5 ? 2.0 * t : 2.0 * (1.0 - t);
    for (double c : {r, g, b}) out += static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0)));
  }
  return out;
}

}  // namespace attrkit::cli
