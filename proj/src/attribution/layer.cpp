#include "attrkit/attribution/layer.hpp"

#include <cmath>

#include "attrkit/engine/error.hpp"

namespace attrkit {

namespace {

// The layer must be a computed node; text inputs are fed at their embedding.
int layer_node(const Model& model, const Features& x, const std::string& layer_id) {
  const int node = model.index_of(layer_id);
  if (model.node(node).kind == LayerKind::input) {
    for (const auto& p : x.points) {
      if (p.name == layer_id && p.node != node) {
        throw Error(ErrorCode::invalid_parameter, "input '" + layer_id + "' holds token ids; use its embedding layer");
      }
    }
  }
  return node;
}

AttributionResult layer_result(std::string method, const Model& model, int node, std::vector<double> values) {
  const Node& n = model.node(node);
  AttributionResult r{std::move(method), {}, {}};
  r.attributions.emplace(n.id, Tensor(n.shape, std::move(values), model.dtype()));
  return r;
}

Point single_baseline(const BaselineSpec& spec, const Features& x, DType dtype) {
  auto all = resolve_baselines(spec, x, dtype);
  if (all.size() != 1) throw Error(ErrorCode::invalid_parameter, "layer attribution takes a single baseline");
  return std::move(all.front());
}

struct PathSample {
  std::vector<double> grad;
  std::vector<double> out;
};

std::vector<PathSample> path_samples(const Evaluator& ev, const Objective& objective, int node, const Point& x0,
                                     const Point& x, std::size_t n, const std::function<double(std::size_t)>& alpha,
                                     const ExecPlan& plan) {
  return chunked_map<PathSample>(n, plan.chunk_size, plan.workers, [&](std::size_t begin, std::size_t end) {
    std::vector<Point> rows;
    for (std::size_t k = begin; k < end; ++k) rows.push_back(interpolate(x0, x, alpha(k)));
    auto g = ev.gradients(rows, objective, GradOverride::none, {}, node);
    std::vector<PathSample> out;
    for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({std::move(g.layer[i]), std::move(g.layer_out[i])});
    return out;
  });
}

}  // namespace

AttributionResult layer_activation(const Model& model, const Features& x, const std::string& layer_id) {
  const int node = layer_node(model, x, layer_id);
  const Evaluator ev(model, x.points);
  const auto acts = ev.forward(std::vector<Point>{x.values});
  if (!acts.has(node)) throw Error(ErrorCode::invalid_parameter, "layer '" + layer_id + "' is not computed from the features");
  return layer_result("layer_activation", model, node, acts.at(node));
}

AttributionResult layer_gradient_x_activation(const Model& model, const Features& x, const TargetSpec& target,
                                              const std::string& layer_id) {
  const auto objective = resolve_target(model, target);
  const int node = layer_node(model, x, layer_id);
  const Evaluator ev(model, x.points);
  auto g = ev.gradients(std::vector<Point>{x.values}, objective, GradOverride::none, {}, node);
  auto v = g.layer_out[0];
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= g.layer[0][i];
  auto r = layer_result("layer_gradient_x_activation", model, node, std::move(v));
  r.diagnostics.output_at_input = g.values[0];
  return r;
}

AttributionResult layer_integrated_gradients(const Model& model, const Features& x, const TargetSpec& target,
                                             const std::string& layer_id, const BaselineSpec& baseline,
                                             std::int64_t steps, const ExecPlan& plan) {
  if (steps < 1) throw Error(ErrorCode::invalid_steps, "steps must be >= 1, got " + std::to_string(steps));
  plan.validate();
  const auto objective = resolve_target(model, target);
  const int node = layer_node(model, x, layer_id);
  const Evaluator ev(model, x.points);
  const Point x0 = single_baseline(baseline, x, model.dtype());

  const auto s = static_cast<double>(steps);
  const auto samples = path_samples(ev, objective, node, x0, x.values, static_cast<std::size_t>(steps),
                                    [s](std::size_t k) { return (static_cast<double>(k) + 0.5) / s; }, plan);
  const auto ends = ev.gradients(std::vector<Point>{x.values, x0}, objective, GradOverride::none, {}, node);
  const auto& yx = ends.layer_out[0];
  const auto& y0 = ends.layer_out[1];

  std::vector<double> mean(yx.size(), 0.0);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (samples[k].grad[i] - mean[i]) / static_cast<double>(k + 1);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    mean[i] *= yx[i] - y0[i];
    sum += mean[i];
  }
  auto r = layer_result("layer_integrated_gradients", model, node, std::move(mean));
  r.diagnostics.output_at_input = ends.values[0];
  r.diagnostics.output_at_baseline = ends.values[1];
  r.diagnostics.delta = sum - (ends.values[0] - ends.values[1]);
  r.diagnostics.samples = steps;
  return r;
}

AttributionResult layer_conductance(const Model& model, const Features& x, const TargetSpec& target,
                                    const std::string& layer_id, const BaselineSpec& baseline, std::int64_t steps,
                                    const ExecPlan& plan) {
  if (steps < 1) throw Error(ErrorCode::invalid_steps, "steps must be >= 1, got " + std::to_string(steps));
  plan.validate();
  const auto objective = resolve_target(model, target);
  const int node = layer_node(model, x, layer_id);
  const Evaluator ev(model, x.points);
  const Point x0 = single_baseline(baseline, x, model.dtype());

  const auto s = static_cast<double>(steps);
  const auto samples = path_samples(ev, objective, node, x0, x.values, static_cast<std::size_t>(steps) + 1,
                                    [s](std::size_t k) { return static_cast<double>(k) / s; }, plan);
  std::vector<double> c(samples.front().out.size(), 0.0);
  for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += samples[k].grad[i] * (samples[k + 1].out[i] - samples[k].out[i]);
  }
  double sum = 0.0;
  for (double v : c) sum += v;
  const auto ends = ev.values(std::vector<Point>{x.values, x0}, objective);
  auto r = layer_result("layer_conductance", model, node, std::move(c));
  r.diagnostics.output_at_input = ends[0];
  r.diagnostics.output_at_baseline = ends[1];
  r.diagnostics.delta = sum - (ends[0] - ends[1]);
  r.diagnostics.samples = steps;
  return r;
}

std::vector<double> l1_normalize(const std::vector<double>& v, const std::string& what) {
  double norm = 0.0;
  for (double e : v) norm += std::abs(e);
  if (norm == 0.0 || !std::isfinite(norm)) throw Error(ErrorCode::degenerate_zero_vector, what + " has zero L1 norm");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

LayerReport normalized_layer_report(const Model& model, const Features& x, const std::string& layer_id,
                                    const BaselineSpec& baseline, std::int64_t steps, const ExecPlan& plan) {
  const int node = model.index_of(layer_id);
  if (model.node(node).kind != LayerKind::linear) {
    throw Error(ErrorCode::invalid_parameter, "'" + layer_id + "' is not a linear layer");
  }
  if (!model.scalar_output()) throw Error(ErrorCode::invalid_parameter, "the model output is not scalar");
  const Node& last = model.node(model.output_node());
  if (last.kind != LayerKind::linear) throw Error(ErrorCode::invalid_parameter, "the output layer is not linear");
  // Only elementwise layers may sit between the layer and the output layer.
  int cur = last.sources.front();
  while (cur != node) {
    const Node& n = model.node(cur);
    if (n.kind != LayerKind::relu) {
      throw Error(ErrorCode::invalid_parameter, "'" + layer_id + "' does not feed the output layer '" + last.id + "'");
    }
    cur = n.sources.front();
  }

  const auto cond = layer_conductance(model, x, TargetSpec::scalar(), layer_id, baseline, steps, plan);
  LayerReport report;
  report.layer = layer_id;
  report.conductance = cond.attributions.at(layer_id).values();
  report.delta = *cond.diagnostics.delta;
  report.attribution = l1_normalize(report.conductance, "conductance of '" + layer_id + "'");
  report.weights = l1_normalize(last.weight.values(), "weights of '" + last.id + "'");
  return report;
}

}  // namespace attrkit
