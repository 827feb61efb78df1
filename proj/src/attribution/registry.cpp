#include "attrkit/attribution/registry.hpp"

#include "attrkit/attribution/layer.hpp"
#include "attrkit/attribution/primary.hpp"
#include "attrkit/engine/error.hpp"

namespace attrkit {

std::string_view to_string(ParamType t) {
  switch (t) {
    case ParamType::integer: return "integer";
    case ParamType::number: return "number";
    case ParamType::string: return "string";
    case ParamType::object: return "object";
  }
  return "number";
}

namespace {

ParamInfo steps_param() {
  return {"steps", ParamType::integer, false, 1.0, std::nullopt, "50", {}, "integral approximation steps"};
}
ParamInfo layer_param(std::string what) {
  return {"layer", ParamType::string, true, std::nullopt, std::nullopt, "", {}, std::move(what)};
}
ParamInfo neuron_param() {
  return {"neuron", ParamType::integer, true, 0.0, std::nullopt, "", {}, "flat neuron index within the layer"};
}
ParamInfo mask_param() {
  return {"feature_mask", ParamType::object, false, std::nullopt, std::nullopt, "", {},
          "per-input integer group ids; default one group per element"};
}

std::vector<MethodInfo> build_roster() {
  const ParamInfo n_samples{"n_samples", ParamType::integer, false, 1.0, std::nullopt, "5", {}, "baseline draws"};
  const ParamInfo stdev{"stdev", ParamType::number, false, 0.0, std::nullopt, "0", {}, "input noise standard deviation"};
  const ParamInfo window{"window", ParamType::object, true, std::nullopt, std::nullopt, "", {},
                         "per-input {shape, strides}; key \"*\" covers every input"};
  return {
      {"saliency", "gradient", "primary", false, {}},
      {"input_x_gradient", "gradient", "primary", false, {}},
      {"guided_backprop", "gradient", "primary", false, {}},
      {"deconvolution", "gradient", "primary", false, {}},
      {"integrated_gradients", "gradient", "primary", false, {steps_param()}},
      {"deeplift", "gradient", "primary", false, {}},
      {"deeplift_shap", "gradient", "primary", false, {}},
      {"gradient_shap", "gradient", "primary", true, {n_samples, stdev}},
      {"gradcam", "gradient", "primary", false, {layer_param("conv2d layer id")}},
      {"guided_gradcam", "gradient", "primary", false, {layer_param("conv2d layer id")}},
      {"feature_ablation", "perturbation", "primary", false, {mask_param()}},
      {"occlusion", "perturbation", "primary", false, {window}},
      {"layer_activation", "gradient", "layer", false, {layer_param("layer id")}},
      {"layer_gradient_x_activation", "gradient", "layer", false, {layer_param("layer id")}},
      {"layer_integrated_gradients", "gradient", "layer", false, {layer_param("layer id"), steps_param()}},
      {"layer_conductance", "gradient", "layer", false, {layer_param("layer id"), steps_param()}},
      {"neuron_gradient", "gradient", "neuron", false, {layer_param("layer id"), neuron_param()}},
      {"neuron_integrated_gradients", "gradient", "neuron", false,
       {layer_param("layer id"), neuron_param(), steps_param()}},
      {"neuron_feature_ablation", "perturbation", "neuron", false,
       {layer_param("layer id"), neuron_param(), mask_param()}},
  };
}

const std::string& require_layer(const AttributionRequest& r) {
  if (!r.params.layer) throw Error(ErrorCode::invalid_parameter, "params.layer: required by " + r.method);
  return *r.params.layer;
}

TargetSpec neuron_target(const AttributionRequest& r) {
  if (!r.params.neuron) throw Error(ErrorCode::invalid_parameter, "params.neuron: required by " + r.method);
  return TargetSpec::neuron(require_layer(r), *r.params.neuron);
}

AttributionResult run_method(const Model& model, const Features& x, const AttributionRequest& r,
                             const ExecPlan& plan) {
  const auto& m = r.method;
  const auto& p = r.params;
  if (m == "saliency") return backprop_attribution(BackpropKind::saliency, model, x, r.target);
  if (m == "input_x_gradient") return backprop_attribution(BackpropKind::input_x_gradient, model, x, r.target);
  if (m == "guided_backprop") return backprop_attribution(BackpropKind::guided_backprop, model, x, r.target);
  if (m == "deconvolution") return backprop_attribution(BackpropKind::deconvolution, model, x, r.target);
  if (m == "integrated_gradients") return integrated_gradients(model, x, r.target, r.baseline, p.steps, plan);
  if (m == "deeplift") return deeplift(model, x, r.target, r.baseline, false, p.seed, plan);
  if (m == "deeplift_shap") return deeplift(model, x, r.target, r.baseline, true, p.seed, plan);
  if (m == "gradient_shap") {
    return gradient_shap(model, x, r.target, r.baseline, p.n_samples, p.stdev, p.seed, plan);
  }
  if (m == "gradcam") return gradcam(model, x, r.target, require_layer(r), false);
  if (m == "guided_gradcam") return gradcam(model, x, r.target, require_layer(r), true);
  if (m == "feature_ablation") return feature_ablation(model, x, r.target, r.baseline, p.feature_mask, plan);
  if (m == "occlusion") {
    if (p.windows.empty()) throw Error(ErrorCode::invalid_parameter, "params.window: required by occlusion");
    return occlusion(model, x, r.target, r.baseline, p.windows, plan);
  }
  if (m == "layer_activation") return layer_activation(model, x, require_layer(r));
  if (m == "layer_gradient_x_activation") return layer_gradient_x_activation(model, x, r.target, require_layer(r));
  if (m == "layer_integrated_gradients") {
    return layer_integrated_gradients(model, x, r.target, require_layer(r), r.baseline, p.steps, plan);
  }
  if (m == "layer_conductance") {
    return layer_conductance(model, x, r.target, require_layer(r), r.baseline, p.steps, plan);
  }
  AttributionResult out;
  if (m == "neuron_gradient") {
    out = backprop_attribution(BackpropKind::saliency, model, x, neuron_target(r));
  } else if (m == "neuron_integrated_gradients") {
    out = integrated_gradients(model, x, neuron_target(r), r.baseline, p.steps, plan);
  } else if (m == "neuron_feature_ablation") {
    out = feature_ablation(model, x, neuron_target(r), r.baseline, p.feature_mask, plan);
  } else {
    throw Error(ErrorCode::invalid_parameter, "unknown method '" + m + "'; available: " + roster_listing());
  }
  out.method = m;
  return out;
}

}  // namespace

const std::vector<MethodInfo>& method_roster() {
  static const std::vector<MethodInfo> roster = build_roster();
  return roster;
}

const MethodInfo* find_method(std::string_view id) {
  for (const auto& m : method_roster()) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

std::string roster_listing() {
  std::string out;
  for (const auto& m : method_roster()) out += (out.empty() ? "" : ", ") + m.id;
  return out;
}

AttributionResult attribute(const Model& model, const Features& x, const AttributionRequest& request,
                            const ExecPlan& plan) {
  if (!find_method(request.method)) {
    throw Error(ErrorCode::invalid_parameter,
                "unknown method '" + request.method + "'; available: " + roster_listing());
  }
  if (!request.params.nt_type) return run_method(model, x, request, plan);
  AttributionRequest inner = request;
  inner.params.nt_type.reset();
  const auto base = make_attributor(model, std::move(inner), plan);
  return noise_tunnel(base, x, *request.params.nt_type, request.params.nt_samples, request.params.nt_stdev,
                      request.params.seed);
}

Attributor make_attributor(const Model& model, AttributionRequest request, ExecPlan plan) {
  return [&model, request = std::move(request), plan](const Features& x) { return attribute(model, x, request, plan); };
}

}  // namespace attrkit
