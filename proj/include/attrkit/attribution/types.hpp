#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attrkit/attribution/evaluator.hpp"
#include "attrkit/engine/graph.hpp"
#include "attrkit/engine/rng.hpp"

namespace attrkit {

/// Reference input expressing "feature absent". Tensor and distribution
/// baselines are keyed by input name; inputs they omit fall back to zero.
struct BaselineSpec {
  enum class Kind { zero, fill, tensor, distribution };
  Kind kind = Kind::zero;
  double fill = 0.0;
  TensorMap tensor;
  std::vector<TensorMap> distribution;

  static BaselineSpec zero() { return {}; }
  static BaselineSpec scalar_fill(double c) { return {Kind::fill, c, {}, {}}; }
  static BaselineSpec of(TensorMap t) { return {Kind::tensor, 0.0, std::move(t), {}}; }
  static BaselineSpec of_distribution(std::vector<TensorMap> d) { return {Kind::distribution, 0.0, {}, std::move(d)}; }
};

/// Baseline for one input tensor. A distribution resolves to all of its
/// members, every other kind to exactly one tensor. Throws ShapeMismatch or
/// EmptyBaselineDistribution.
std::vector<Tensor> resolve_baseline(const BaselineSpec& spec, const std::string& input, const Tensor& like);

// One uniformly drawn member (or the single baseline) for `input`.
Tensor draw_baseline(const BaselineSpec& spec, const std::string& input, const Tensor& like, Rng& rng);

// Attribution-space baselines, rounded to `dtype`: one Point per
// distribution member, or exactly one.
std::vector<Point> resolve_baselines(const BaselineSpec& spec, const Features& x, DType dtype = DType::f64);

enum class NoiseTunnelType { smoothgrad, smoothgrad_sq, vargrad };

std::string_view to_string(NoiseTunnelType t);
std::optional<NoiseTunnelType> parse_noise_tunnel_type(std::string_view s);

/// Occlusion window and stride for one input; both have the input's rank.
struct Window {
  Shape shape;
  Shape strides;
};

struct MethodParams {
  std::int64_t steps = 50;
  std::int64_t n_samples = 5;
  double stdev = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::string> layer;
  std::optional<std::int64_t> neuron;
  std::map<std::string, Window> windows;  // key "*" applies to every input
  TensorMap feature_mask;                 // integer group ids, per input
  std::optional<NoiseTunnelType> nt_type;
  std::int64_t nt_samples = 5;
  double nt_stdev = 0.1;
};

struct AttributionRequest {
  std::string method;
  TargetSpec target;
  BaselineSpec baseline;
  MethodParams params;
};

struct Diagnostics {
  std::optional<double> delta;  // sum of attributions minus (F(x) - F(x0))
  std::optional<double> output_at_input;
  std::optional<double> output_at_baseline;
  std::optional<std::int64_t> samples;
  std::optional<std::uint64_t> seed;
};

struct AttributionResult {
  std::string method;
  TensorMap attributions;
  Diagnostics diagnostics;
};

using Attributor = std::function<AttributionResult(const Features&)>;

double total(const AttributionResult& r);

}  // namespace attrkit
