#include "attrkit/io/request_json.hpp"

#include <cmath>

#include "attrkit/engine/error.hpp"

namespace attrkit::io {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::invalid_parameter, path + ": " + what);
}

const FeaturePoint& point_named(const std::vector<FeaturePoint>& points, const std::string& name,
                                const std::string& path) {
  for (const auto& p : points) {
    if (p.name == name) return p;
  }
  fail(path, "unknown input '" + name + "'");
}

TensorMap per_input(const json& doc, const std::vector<FeaturePoint>& points, const std::string& path) {
  if (!doc.is_object()) fail(path, "expected an object keyed by input name");
  TensorMap out;
  for (const auto& [name, value] : doc.items()) {
    const auto& p = point_named(points, name, path + "." + name);
    out.emplace(name, tensor_from_json(value, p.shape, path + "." + name));
  }
  return out;
}

Shape shape_from_json(const json& doc, const std::string& path) {
  if (!doc.is_array()) fail(path, "expected an array of integers");
  Shape s;
  for (const auto& d : doc) {
    if (!d.is_number_integer()) fail(path, "expected an array of integers");
    s.push_back(d.get<std::int64_t>());
  }
  return s;
}

std::int64_t get_int(const json& doc, const std::string& path, std::optional<std::int64_t> min = std::nullopt) {
  if (!doc.is_number_integer()) fail(path, "expected an integer");
  const auto v = doc.get<std::int64_t>();
  if (min && v < *min) fail(path, "must be >= " + std::to_string(*min));
  return v;
}

double get_number(const json& doc, const std::string& path) {
  if (!doc.is_number()) fail(path, "expected a number");
  const auto v = doc.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

void check_param(const ParamInfo& info, const json& value, const std::string& path) {
  switch (info.type) {
    case ParamType::integer:
      if (!value.is_number_integer()) fail(path, "expected an integer");
      break;
    case ParamType::number:
      get_number(value, path);
      break;
    case ParamType::string:
      if (!value.is_string()) fail(path, "expected a string");
      break;
    case ParamType::object:
      if (!value.is_object()) fail(path, "expected an object");
      break;
  }
  if (info.type == ParamType::integer || info.type == ParamType::number) {
    const double v = value.get<double>();
    const auto bound = [&](double b) {
      return info.type == ParamType::integer ? std::to_string(static_cast<std::int64_t>(b)) : json(b).dump();
    };
    if (info.minimum && v < *info.minimum) fail(path, "must be >= " + bound(*info.minimum));
    if (info.exclusive_min && v <= *info.exclusive_min) fail(path, "must be > " + bound(*info.exclusive_min));
  }
  if (!info.choices.empty()) {
    const auto s = value.get<std::string>();
    if (std::find(info.choices.begin(), info.choices.end(), s) == info.choices.end()) {
      fail(path, "must be one of " + json(info.choices).dump());
    }
  }
}

BaselineSpec parse_baseline(const json& doc, const std::vector<FeaturePoint>& points) {
  if (doc.is_null()) return BaselineSpec::zero();
  if (doc.is_number()) return BaselineSpec::scalar_fill(get_number(doc, "baseline"));
  if (doc.is_string() && doc.get<std::string>() == "zero") return BaselineSpec::zero();
  if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string()) {
    fail("baseline", "expected {\"kind\": \"zero\" | \"fill\" | \"tensor\" | \"distribution\", ...}");
  }
  const auto kind = doc["kind"].get<std::string>();
  if (kind == "zero") return BaselineSpec::zero();
  if (kind == "fill") {
    if (!doc.contains("value")) fail("baseline.value", "required for a fill baseline");
    return BaselineSpec::scalar_fill(get_number(doc["value"], "baseline.value"));
  }
  if (kind == "tensor") {
    if (!doc.contains("inputs")) fail("baseline.inputs", "required for a tensor baseline");
    return BaselineSpec::of(per_input(doc["inputs"], points, "baseline.inputs"));
  }
  if (kind == "distribution") {
    if (!doc.contains("members") || !doc["members"].is_array()) fail("baseline.members", "expected an array");
    std::vector<TensorMap> members;
    for (std::size_t m = 0; m < doc["members"].size(); ++m) {
      members.push_back(per_input(doc["members"][m], points, "baseline.members[" + std::to_string(m) + "]"));
    }
    if (members.empty()) throw Error(ErrorCode::empty_baseline_distribution, "baseline.members: no baselines given");
    return BaselineSpec::of_distribution(std::move(members));
  }
  fail("baseline.kind", "unknown baseline kind '" + kind + "'");
}

json baseline_to_json(const BaselineSpec& b) {
  const auto inputs = [](const TensorMap& m) {
    json out = json::object();
    for (const auto& [name, t] : m) out[name] = t.values();
    return out;
  };
  switch (b.kind) {
    case BaselineSpec::Kind::zero: return {{"kind", "zero"}};
    case BaselineSpec::Kind::fill: return {{"kind", "fill"}, {"value", b.fill}};
    case BaselineSpec::Kind::tensor: return {{"kind", "tensor"}, {"inputs", inputs(b.tensor)}};
    case BaselineSpec::Kind::distribution: {
      json members = json::array();
      for (const auto& m : b.distribution) members.push_back(inputs(m));
      return {{"kind", "distribution"}, {"members", members}};
    }
  }
  return {{"kind", "zero"}};
}

void parse_noise_tunnel(const json& doc, MethodParams& p) {
  const std::string path = "params.noise_tunnel";
  if (!doc.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "type") {
      if (!value.is_string()) fail(path + ".type", "expected a string");
      p.nt_type = parse_noise_tunnel_type(value.get<std::string>());
      if (!p.nt_type) fail(path + ".type", "must be one of [\"smoothgrad\",\"smoothgrad_sq\",\"vargrad\"]");
    } else if (key == "n_samples") {
      p.nt_samples = get_int(value, path + ".n_samples", 1);
    } else if (key == "stdev") {
      p.nt_stdev = get_number(value, path + ".stdev");
      if (p.nt_stdev < 0.0) fail(path + ".stdev", "must be >= 0");
    } else {
      fail(path + "." + key, "unknown field");
    }
  }
  if (!p.nt_type) fail(path + ".type", "required");
}

}  // namespace

json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"dtype", t.dtype() == DType::f32 ? "f32" : "f64"}, {"values", t.values()}};
}

Tensor tensor_from_json(const json& doc, const Shape& shape, const std::string& path) {
  const json* values = &doc;
  if (doc.is_object()) {
    if (!doc.contains("values")) fail(path + ".values", "required");
    if (doc.contains("shape") && shape_from_json(doc["shape"], path + ".shape") != shape) {
      fail(path + ".shape", "expected " + shape_string(shape));
    }
    values = &doc["values"];
  }
  if (!values->is_array()) fail(path, "expected an array of numbers");
  std::vector<double> data;
  for (std::size_t i = 0; i < values->size(); ++i) {
    data.push_back(get_number((*values)[i], path + "[" + std::to_string(i) + "]"));
  }
  if (static_cast<std::int64_t>(data.size()) != shape_size(shape)) {
    throw Error(ErrorCode::shape_mismatch, path + ": expected " + std::to_string(shape_size(shape)) +
                                               " values for shape " + shape_string(shape) + ", got " +
                                               std::to_string(data.size()));
  }
  return Tensor(shape, std::move(data));
}

json target_to_json(const TargetSpec& target) {
  if (target.layer) return {{"layer", *target.layer}, {"neuron", target.index.value_or(0)}};
  if (target.index) return *target.index;
  return nullptr;
}

TargetSpec parse_target(const json& doc, const std::string& path) {
  if (doc.is_null()) return TargetSpec::scalar();
  if (doc.is_number_integer()) return TargetSpec::class_index(doc.get<std::int64_t>());
  if (doc.is_object()) {
    if (!doc.contains("layer") || !doc["layer"].is_string()) fail(path + ".layer", "expected a string");
    if (!doc.contains("neuron")) fail(path + ".neuron", "required");
    return TargetSpec::neuron(doc["layer"].get<std::string>(), get_int(doc["neuron"], path + ".neuron"));
  }
  fail(path, "expected a class index, null or {\"layer\", \"neuron\"}");
}

RunRequest parse_request(const json& doc, const std::vector<FeaturePoint>& points) {
  if (!doc.is_object()) fail("request", "expected an object");
  for (const auto& [key, value] : doc.items()) {
    static const std::set<std::string> known{"method", "target", "baseline", "params", "seed", "exec"};
    if (!known.contains(key)) fail(key, "unknown field");
  }
  RunRequest out;
  auto& r = out.request;
  if (!doc.contains("method") || !doc["method"].is_string()) fail("method", "expected a method id");
  r.method = doc["method"].get<std::string>();
  const MethodInfo* info = find_method(r.method);
  if (!info) fail("method", "unknown method '" + r.method + "'; available: " + roster_listing());

  r.target = parse_target(doc.value("target", json(nullptr)), "target");
  r.baseline = parse_baseline(doc.value("baseline", json(nullptr)), points);
  if (doc.contains("seed")) {
    const auto& seed = doc["seed"];
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
      fail("seed", "expected a non-negative integer");
    }
    r.params.seed = seed.get<std::uint64_t>();
  }

  const json params = doc.value("params", json::object());
  if (!params.is_object()) fail("params", "expected an object");
  for (const auto& pi : info->params) {
    if (pi.required && !params.contains(pi.name)) fail("params." + pi.name, "required by " + r.method);
  }
  for (const auto& [key, value] : params.items()) {
    const std::string path = "params." + key;
    if (key == "noise_tunnel") {
      parse_noise_tunnel(value, r.params);
      continue;
    }
    const ParamInfo* pi = nullptr;
    for (const auto& candidate : info->params) {
      if (candidate.name == key) pi = &candidate;
    }
    if (!pi) fail(path, "not a parameter of " + r.method);
    check_param(*pi, value, path);
    if (key == "steps") {
      r.params.steps = value.get<std::int64_t>();
    } else if (key == "n_samples") {
      r.params.n_samples = value.get<std::int64_t>();
    } else if (key == "stdev") {
      r.params.stdev = value.get<double>();
    } else if (key == "layer") {
      r.params.layer = value.get<std::string>();
    } else if (key == "neuron") {
      r.params.neuron = value.get<std::int64_t>();
    } else if (key == "feature_mask") {
      r.params.feature_mask = per_input(value, points, path);
    } else if (key == "window") {
      for (const auto& [name, w] : value.items()) {
        const std::string wpath = path + "." + name;
        if (name != "*") point_named(points, name, wpath);
        if (!w.is_object() || !w.contains("shape")) fail(wpath + ".shape", "required");
        Window win{shape_from_json(w["shape"], wpath + ".shape"), {}};
        win.strides = w.contains("strides") ? shape_from_json(w["strides"], wpath + ".strides") : win.shape;
        r.params.windows[name] = std::move(win);
      }
    }
  }

  if (doc.contains("exec")) {
    const auto& e = doc["exec"];
    if (!e.is_object()) fail("exec", "expected an object");
    for (const auto& [key, value] : e.items()) {
      if (key == "chunk_size") {
        out.plan.chunk_size = get_int(value, "exec.chunk_size", 1);
      } else if (key == "perturbations_per_eval") {
        out.plan.perturbations_per_eval = get_int(value, "exec.perturbations_per_eval", 1);
      } else if (key == "workers") {
        out.plan.workers = static_cast<int>(get_int(value, "exec.workers", 1));
      } else {
        fail("exec." + key, "unknown field");
      }
    }
  }
  return out;
}

json request_to_json(const AttributionRequest& r, const ExecPlan& plan) {
  json params = json::object();
  if (const MethodInfo* info = find_method(r.method)) {
    for (const auto& pi : info->params) {
      const auto& p = r.params;
      if (pi.name == "steps") params["steps"] = p.steps;
      if (pi.name == "n_samples") params["n_samples"] = p.n_samples;
      if (pi.name == "stdev") params["stdev"] = p.stdev;
      if (pi.name == "layer" && p.layer) params["layer"] = *p.layer;
      if (pi.name == "neuron" && p.neuron) params["neuron"] = *p.neuron;
      if (pi.name == "feature_mask" && !p.feature_mask.empty()) {
        json masks = json::object();
        for (const auto& [name, t] : p.feature_mask) masks[name] = t.values();
        params["feature_mask"] = masks;
      }
      if (pi.name == "window") {
        json windows = json::object();
        for (const auto& [name, w] : p.windows) windows[name] = {{"shape", w.shape}, {"strides", w.strides}};
        params["window"] = windows;
      }
    }
  }
  if (r.params.nt_type) {
    params["noise_tunnel"] = {
        {"type", to_string(*r.params.nt_type)}, {"n_samples", r.params.nt_samples}, {"stdev", r.params.nt_stdev}};
  }
  return {{"method", r.method},
          {"target", target_to_json(r.target)},
          {"baseline", baseline_to_json(r.baseline)},
          {"params", params},
          {"seed", r.params.seed},
          {"exec",
           {{"chunk_size", plan.chunk_size},
            {"perturbations_per_eval", plan.perturbations_per_eval},
            {"workers", plan.workers}}}};
}

json diagnostics_to_json(const Diagnostics& d) {
  json out = json::object();
  if (d.delta) out["delta"] = *d.delta;
  if (d.output_at_input) out["output_at_input"] = *d.output_at_input;
  if (d.output_at_baseline) out["output_at_baseline"] = *d.output_at_baseline;
  if (d.samples) out["samples"] = *d.samples;
  if (d.seed) out["seed"] = *d.seed;
  return out;
}

json result_to_json(const AttributionResult& r) {
  json attributions = json::object();
  for (const auto& [name, t] : r.attributions) attributions[name] = tensor_to_json(t);
  return {{"method", r.method}, {"attributions", attributions}, {"diagnostics", diagnostics_to_json(r.diagnostics)}};
}

json metric_to_json(const MetricResult& m) {
  return {{"metric", m.metric}, {"value", m.value}, {"n_samples", m.n_samples}, {"seed", m.seed}, {"flags", m.flags}};
}

json roster_to_json() {
  json methods = json::array();
  for (const auto& m : method_roster()) {
    json params = json::array();
    for (const auto& p : m.params) {
      json entry = {{"name", p.name}, {"type", to_string(p.type)}, {"required", p.required},
                    {"description", p.description}};
      if (p.minimum) entry["minimum"] = *p.minimum;
      if (p.exclusive_min) entry["exclusive_minimum"] = *p.exclusive_min;
      if (!p.default_value.empty()) entry["default"] = json::parse(p.default_value);
      if (!p.choices.empty()) entry["enum"] = p.choices;
      params.push_back(std::move(entry));
    }
    params.push_back({{"name", "noise_tunnel"},
                      {"type", "object"},
                      {"required", false},
                      {"description", "wrap in a noise tunnel: {type: smoothgrad|smoothgrad_sq|vargrad, n_samples, stdev}"}});
    methods.push_back({{"id", m.id},
                       {"family", m.family},
                       {"scope", m.scope},
                       {"stochastic", m.stochastic},
                       {"params", params}});
  }
  return methods;
}

json layer_report_to_json(const LayerReport& r) {
  return {{"layer", r.layer},
          {"attribution", r.attribution},
          {"weights_row", r.weights},
          {"conductance", r.conductance},
          {"delta", r.delta}};
}

}  // namespace attrkit::io
