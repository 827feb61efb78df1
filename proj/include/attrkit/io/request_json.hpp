#pragma once

#include "attrkit/attribution/layer.hpp"
#include "attrkit/attribution/registry.hpp"
#include "attrkit/io/model_io.hpp"
#include "attrkit/metrics/metrics.hpp"

namespace attrkit::io {

/// A parsed attribution request document:
///
///     {"method": "integrated_gradients",
///      "target": 1 | null | {"layer": "fc1", "neuron": 3},
///      "baseline": {"kind": "zero"} | {"kind": "fill", "value": 0.5}
///                | {"kind": "tensor", "inputs": {"<input>": [...]}}
///                | {"kind": "distribution", "members": [{"<input>": [...]}, ...]},
///      "params": {...method parameters...,
///                 "noise_tunnel": {"type": "smoothgrad", "n_samples": 5, "stdev": 0.1}},
///      "seed": 0,
///      "exec": {"chunk_size": 64, "perturbations_per_eval": 1, "workers": 1}}
///
/// Tensors are flat row-major arrays or {"shape": [...], "values": [...]}
/// and take the shape of the feature they belong to.
struct RunRequest {
  AttributionRequest request;
  ExecPlan plan;
};

/// Validates against the method's parameter schema. Throws InvalidParameter
/// whose message starts with the offending path, e.g. "params.steps: ...".
RunRequest parse_request(const json& doc, const std::vector<FeaturePoint>& points);
json request_to_json(const AttributionRequest& request, const ExecPlan& plan);

json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const json& doc, const Shape& shape, const std::string& path);

json target_to_json(const TargetSpec& target);
TargetSpec parse_target(const json& doc, const std::string& path);

json diagnostics_to_json(const Diagnostics& d);
json result_to_json(const AttributionResult& r);
json metric_to_json(const MetricResult& m);
json roster_to_json();
json layer_report_to_json(const LayerReport& r);

}  // namespace attrkit::io
