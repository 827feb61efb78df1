#include "attrkit/app/session.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "attrkit/attribution/primary.hpp"
#include "attrkit/cli/render.hpp"
#include "attrkit/engine/error.hpp"

namespace attrkit::app {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::invalid_parameter, path + ": " + what);
}

json prediction_to_json(const Model& model, const Prediction& p) {
  return {{"class", p.predicted}, {"label", class_name(model, p.predicted)}, {"scores", p.outputs.values()}};
}

json header(const Workspace& ws, const io::SampleBundle& sample) {
  return {{"model", ws.model.spec().name}, {"sample", sample.id}};
}

struct Prepared {
  Features x;
  Prediction prediction;
  io::RunRequest run;
};

Prepared prepare(const Workspace& ws, const io::SampleBundle& sample, const json& request_doc) {
  const auto inputs = sample_inputs(ws.model, sample);
  Prepared p{to_features(ws.model, inputs), predict(ws.model, inputs), {}};
  p.run = resolve_request(ws.model, p.x, p.prediction, request_doc);
  return p;
}

const InputDecl* input_of(const Model& model, Modality m) {
  for (const auto& in : model.spec().inputs) {
    if (in.modality == m) return &in;
  }
  return nullptr;
}

}  // namespace

const io::SampleBundle* Workspace::find_sample(const std::string& id) const {
  for (const auto& s : samples) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

Workspace load_workspace(const std::filesystem::path& model, const std::filesystem::path& weights,
                         const std::filesystem::path& dataset) {
  Workspace ws{io::load_model(model, weights), {}};
  if (!dataset.empty()) ws.samples = io::read_dataset(dataset);
  for (const auto& s : ws.samples) io::validate_sample(s, ws.model);
  return ws;
}

TensorMap sample_inputs(const Model& model, const io::SampleBundle& sample) {
  TensorMap out;
  for (const auto& in : model.spec().inputs) {
    auto it = sample.modalities.find(in.name);
    if (it == sample.modalities.end()) {
      throw Error(ErrorCode::shape_mismatch, "sample '" + sample.id + "' has no input '" + in.name + "'");
    }
    out.emplace(in.name, it->second.as(model.dtype()));
  }
  return out;
}

Prediction predict(const Model& model, const TensorMap& inputs) {
  Prediction p{eval_graph(model, inputs).outputs, 0};
  const auto& v = p.outputs.values();
  p.predicted = static_cast<std::int64_t>(std::max_element(v.begin(), v.end()) - v.begin());
  return p;
}

std::string class_name(const Model& model, std::int64_t index) {
  const auto& names = model.spec().class_names;
  if (index >= 0 && static_cast<std::size_t>(index) < names.size()) return names[static_cast<std::size_t>(index)];
  return std::to_string(index);
}

io::RunRequest resolve_request(const Model& model, const Features& x, const Prediction& prediction,
                               const json& request_doc) {
  json doc = request_doc;
  if (doc.is_object() && (!doc.contains("target") || doc["target"].is_null()) && !model.scalar_output()) {
    doc["target"] = prediction.predicted;
  }
  return io::parse_request(doc, x.points);
}

void require_finite(const AttributionResult& result) {
  for (const auto& [name, t] : result.attributions) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t[i])) {
        throw Error(ErrorCode::numeric_failure, result.method + " produced a non-finite attribution for '" + name +
                                                    "' at flat index " + std::to_string(i));
      }
    }
  }
}

RunOutcome run_attribution(const Workspace& ws, const io::SampleBundle& sample, const json& request_doc) {
  auto p = prepare(ws, sample, request_doc);
  auto result = attribute(ws.model, p.x, p.run.request, p.run.plan);
  require_finite(result);
  json doc = header(ws, sample);
  doc["request"] = io::request_to_json(p.run.request, p.run.plan);
  doc["prediction"] = prediction_to_json(ws.model, p.prediction);
  doc["result"] = io::result_to_json(result);
  return {std::move(p.run), std::move(p.x), std::move(p.prediction), std::move(result), std::move(doc)};
}

MetricRequest parse_metric_request(const json& doc, std::uint64_t seed) {
  MetricRequest m;
  m.perturb.seed = seed;
  if (doc.is_null()) return m;
  if (!doc.is_object()) fail("metric", "expected an object");
  const auto number = [](const json& v, const std::string& path) {
    if (!v.is_number() || !std::isfinite(v.get<double>())) fail(path, "expected a finite number");
    return v.get<double>();
  };
  const auto integer = [](const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    if (v.get<std::int64_t>() < 1) fail(path, "must be >= 1");
    return v.get<std::int64_t>();
  };
  for (const auto& [key, v] : doc.items()) {
    const std::string path = "metric." + key;
    if (key == "metric") {
      if (!v.is_string() || (v != "infidelity" && v != "max_sensitivity")) {
        fail(path, "must be one of [\"infidelity\",\"max_sensitivity\"]");
      }
      m.metric = v.get<std::string>();
    } else if (key == "kind") {
      const auto kind = v.is_string() ? parse_infidelity_kind(v.get<std::string>()) : std::nullopt;
      if (!kind) fail(path, "must be one of [\"local\",\"global\"]");
      m.perturb.kind = *kind;
    } else if (key == "stdev") {
      m.perturb.stdev = number(v, path);
      if (m.perturb.stdev <= 0.0) fail(path, "must be > 0");
    } else if (key == "p") {
      m.perturb.p = number(v, path);
      if (m.perturb.p <= 0.0 || m.perturb.p > 1.0) fail(path, "must be in (0, 1]");
    } else if (key == "n_samples") {
      m.perturb.n_samples = integer(v, path);
    } else if (key == "batch_size") {
      m.perturb.batch_size = integer(v, path);
    } else if (key == "radius") {
      m.radius = number(v, path);
      if (m.radius <= 0.0) fail(path, "must be > 0");
    } else {
      fail(path, "unknown field");
    }
  }
  m.perturb.validate();
  return m;
}

json metric_request_to_json(const MetricRequest& m) {
  json out = {{"metric", m.metric}, {"n_samples", m.perturb.n_samples}};
  if (m.metric == "infidelity") {
    out["kind"] = to_string(m.perturb.kind);
    if (m.perturb.kind == InfidelityKind::local) {
      out["stdev"] = m.perturb.stdev;
    } else {
      out["p"] = m.perturb.p;
    }
    out["batch_size"] = m.perturb.batch_size;
  } else {
    out["radius"] = m.radius;
  }
  return out;
}

MetricOutcome run_metric(const Workspace& ws, const io::SampleBundle& sample, const json& request_doc,
                         const json& metric_doc) {
  auto p = prepare(ws, sample, request_doc);
  auto metric = parse_metric_request(metric_doc, p.run.request.params.seed);
  const auto& r = p.run.request;
  MetricResult result;
  if (metric.metric == "infidelity") {
    const auto phi = attribute(ws.model, p.x, r, p.run.plan);
    require_finite(phi);
    result = infidelity(ws.model, p.x, r.target, phi.attributions, metric.perturb, r.baseline, p.run.plan.workers);
  } else {
    result = max_sensitivity(make_attributor(ws.model, r, p.run.plan), p.x, metric.radius, metric.perturb.n_samples,
                             metric.perturb.seed, p.run.plan.workers);
  }
  if (!std::isfinite(result.value)) throw Error(ErrorCode::numeric_failure, result.metric + " is not finite");
  json doc = header(ws, sample);
  doc["request"] = io::request_to_json(r, p.run.plan);
  doc["metric"] = metric_request_to_json(metric);
  doc["result"] = io::metric_to_json(result);
  return {std::move(p.run), std::move(metric), std::move(result), std::move(doc)};
}

json layer_report_document(const Workspace& ws, const io::SampleBundle& sample, const std::string& layer,
                           const json& request_doc) {
  json doc_in = request_doc.is_null() ? json::object() : request_doc;
  doc_in["method"] = "layer_conductance";
  doc_in["params"] = doc_in.value("params", json::object());
  doc_in["params"]["layer"] = layer;
  auto p = prepare(ws, sample, doc_in);
  const auto report = normalized_layer_report(ws.model, p.x, layer, p.run.request.baseline,
                                              p.run.request.params.steps, p.run.plan);
  const auto l1 = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s += std::abs(a);
    return s;
  };
  json doc = header(ws, sample);
  doc["request"] = io::request_to_json(p.run.request, p.run.plan);
  doc["report"] = io::layer_report_to_json(report);
  doc["l1_norms"] = {{"attribution", l1(report.attribution)}, {"weights_row", l1(report.weights)}};
  return doc;
}

json bench_document(const Workspace& ws, const io::SampleBundle& sample, const json& request_doc,
                    const std::vector<int>& workers, const std::vector<std::int64_t>& perturbations_per_eval,
                    const std::vector<std::int64_t>& chunk_sizes, int repetitions) {
  auto p = prepare(ws, sample, request_doc);
  std::vector<ExecPlan> plans;
  for (int w : workers) {
    for (auto ppe : perturbations_per_eval) {
      for (auto chunk : chunk_sizes) plans.push_back({chunk, ppe, w});
    }
  }
  const auto report = bench(ws.model, p.x, p.run.request, std::move(plans), repetitions);
  json doc = header(ws, sample);
  doc["request"] = io::request_to_json(p.run.request, p.run.plan);
  doc["repetitions"] = repetitions;
  doc["hardware_concurrency"] = std::thread::hardware_concurrency();
  doc["bench"] = bench_report_to_json(report);
  return doc;
}

TokenView token_view(const Model& model, const io::SampleBundle& sample, const AttributionResult& result) {
  const InputDecl* text = input_of(model, Modality::text);
  if (!text) throw Error(ErrorCode::invalid_parameter, "model '" + model.spec().name + "' has no text input");
  auto it = result.attributions.find(text->name);
  if (it == result.attributions.end()) {
    throw Error(ErrorCode::invalid_parameter, result.method + " does not attribute the text input '" + text->name + "'");
  }
  TokenView view{text->name, {}, cli::token_scores(it->second)};
  if (auto info = sample.info.find(text->name); info != sample.info.end()) view.tokens = info->second.tokens;
  if (view.tokens.empty()) {
    for (double id : sample.modalities.at(text->name).values()) view.tokens.push_back(std::to_string(std::lround(id)));
  }
  return view;
}

Tensor image_map(const Model& model, const AttributionResult& result) {
  const InputDecl* image = input_of(model, Modality::image);
  if (!image || image->shape.size() != 3) {
    throw Error(ErrorCode::invalid_parameter, "model '" + model.spec().name + "' has no [C, H, W] image input");
  }
  const auto h = image->shape[1], w = image->shape[2];
  if (auto it = result.attributions.find(image->name); it != result.attributions.end()) {
    return cli::channel_abs_sum(it->second);
  }
  if (result.attributions.size() == 1) {
    Tensor map = result.attributions.begin()->second;
    if (map.rank() == 3) map = cli::channel_abs_sum(map);
    if (map.rank() == 2) {
      if (map.shape()[0] == h && map.shape()[1] == w) return map;
      return Tensor({h, w}, upsample_bilinear(map.values(), map.shape()[0], map.shape()[1], h, w));
    }
  }
  throw Error(ErrorCode::invalid_parameter, result.method + " has no spatial attribution to render");
}

}  // namespace attrkit::app
