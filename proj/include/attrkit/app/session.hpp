#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "attrkit/attribution/layer.hpp"
#include "attrkit/exec/bench.hpp"
#include "attrkit/io/dataset.hpp"
#include "attrkit/io/request_json.hpp"
#include "attrkit/metrics/metrics.hpp"

namespace attrkit::app {

using json = nlohmann::json;

/// A loaded model and its dataset; immutable once built.
struct Workspace {
  Model model;
  std::vector<io::SampleBundle> samples;

  const io::SampleBundle* find_sample(const std::string& id) const;
};

// `dataset` may be empty for a model without samples.
Workspace load_workspace(const std::filesystem::path& model, const std::filesystem::path& weights,
                         const std::filesystem::path& dataset);

// Sample tensors in the model's dtype, keyed by input name.
TensorMap sample_inputs(const Model& model, const io::SampleBundle& sample);

struct Prediction {
  Tensor outputs;
  std::int64_t predicted = 0;  // argmax of the outputs
};

Prediction predict(const Model& model, const TensorMap& inputs);
std::string class_name(const Model& model, std::int64_t index);

/// Parses a request document against the sample's features. A missing or
/// null target on a multi-output model becomes the predicted class, so the
/// echo always names the target that was used.
io::RunRequest resolve_request(const Model& model, const Features& x, const Prediction& prediction,
                               const json& request_doc);

// Throws NumericFailure when any attribution value is NaN or infinite.
void require_finite(const AttributionResult& result);

/// Everything one attribution run produced, with its replayable echo.
struct RunOutcome {
  io::RunRequest run;
  Features x;
  Prediction prediction;
  AttributionResult result;
  json document;  // {model, sample, request, prediction, result}
};

RunOutcome run_attribution(const Workspace& ws, const io::SampleBundle& sample, const json& request_doc);

/// Metric settings. Missing fields take their defaults and are echoed back:
///
///     {"metric": "infidelity" | "max_sensitivity",
///      "kind": "local" | "global", "stdev": 0.03, "p": 0.5,
///      "n_samples": 10, "batch_size": 16, "radius": 0.03}
///
/// Both metrics draw from the request seed.
struct MetricRequest {
  std::string metric = "infidelity";
  PerturbSpec perturb;
  double radius = 0.03;
};

MetricRequest parse_metric_request(const json& doc, std::uint64_t seed);
json metric_request_to_json(const MetricRequest& m);

struct MetricOutcome {
  io::RunRequest run;
  MetricRequest metric;
  MetricResult result;
  json document;  // {model, sample, request, metric, result}
};

MetricOutcome run_metric(const Workspace& ws, const io::SampleBundle& sample, const json& request_doc,
                         const json& metric_doc);

// Normalized conductance against the final weight row for one layer.
json layer_report_document(const Workspace& ws, const io::SampleBundle& sample, const std::string& layer,
                           const json& request_doc);

// Times the request under the Cartesian product of the given settings.
json bench_document(const Workspace& ws, const io::SampleBundle& sample, const json& request_doc,
                    const std::vector<int>& workers, const std::vector<std::int64_t>& perturbations_per_eval,
                    const std::vector<std::int64_t>& chunk_sizes, int repetitions);

/// Sum over the embedding axis of a text input's attribution, with the
/// sample's tokens. Throws InvalidParameter when the model has no text input.
struct TokenView {
  std::string input;
  std::vector<std::string> tokens;
  std::vector<double> scores;
};

TokenView token_view(const Model& model, const io::SampleBundle& sample, const AttributionResult& result);

/// 2-D map for an image heatmap: channel-summed |attribution| of the image
/// input, or a layer map resized to the image. Throws InvalidParameter when
/// the model has no image input.
Tensor image_map(const Model& model, const AttributionResult& result);

}  // namespace attrkit::app
