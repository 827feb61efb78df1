#include "support.hpp"

#include <algorithm>
#include <cmath>

#include "attrkit/engine/graph.hpp"

#include "attrkit/engine/rng.hpp"
#include "attrkit/io/demo.hpp"

namespace attrkit::testing {

Model linear_model(const std::vector<double>& w, double b, bool with_bias) {
  const auto n = static_cast<std::int64_t>(w.size());
  ModelSpec spec{"linear", {{"x", {n}, Modality::tabular}},
                 {{"fc", LayerKind::linear, {"x"}, LinearParams{n, 1, with_bias}}}, "fc", {}};
  WeightStore weights{{"fc.weight", Tensor({1, n}, w)}};
  if (with_bias) weights.emplace("fc.bias", Tensor({1}, {b}));
  return Model(std::move(spec), std::move(weights));
}

Model random_mlp(std::uint64_t seed, std::int64_t in, const std::vector<std::int64_t>& hidden, std::int64_t out) {
  ModelSpec spec{"mlp", {{"x", {in}, Modality::tabular}}, {}, "", {}};
  std::string prev = "x";
  std::int64_t width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const auto fc = "fc" + std::to_string(i);
    const auto relu = "relu" + std::to_string(i);
    spec.layers.push_back({fc, LayerKind::linear, {prev}, LinearParams{width, hidden[i], true}});
    spec.layers.push_back({relu, LayerKind::relu, {fc}, {}});
    prev = relu;
    width = hidden[i];
  }
  const auto last = "fc" + std::to_string(hidden.size());
  spec.layers.push_back({last, LayerKind::linear, {prev}, LinearParams{width, out, true}});
  spec.output = last;
  auto weights = io::seeded_weights(spec, seed, DType::f64);
  return Model(std::move(spec), std::move(weights));
}

Model single_layer(LayerDecl layer, const Shape& input_shape, const WeightStore& weights, Modality modality) {
  layer.inputs = {"x"};
  const auto id = layer.id;
  ModelSpec spec{"single", {{"x", input_shape, modality}}, {std::move(layer)}, id, {}};
  return Model(std::move(spec), weights);
}

Features features(const Model& model, const std::vector<double>& x) {
  const auto& node = model.node(model.input_nodes().front());
  return to_features(model, {{node.id, Tensor(node.shape, x)}});
}

Features features(const Model& model, const TensorMap& inputs) { return to_features(model, inputs); }

std::vector<double> random_vector(std::uint64_t seed, std::size_t n, double lo, double hi) {
  Rng rng(seed, 77);
  std::vector<double> v(n);
  for (double& e : v) e = rng.uniform(lo, hi);
  return v;
}

const std::vector<double>& only(const AttributionResult& r) { return r.attributions.begin()->second.values(); }

namespace {

double output(const Model& m, const std::vector<double>& x) { return eval_graph(m, {{"x", Tensor::vector(x)}}).outputs[0]; }

}  // namespace

double naive_local_infidelity(const Model& m, const std::vector<double>& x, const std::vector<double>& phi,
                              double stdev, int n, std::uint64_t seed) {
  const double fx = output(m, x);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    Rng rng(seed, static_cast<std::uint64_t>(j));
    std::vector<double> y(x.size());
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = stdev * rng.normal();
      dot += e * phi[i];
      y[i] = x[i] - e;
    }
    const double gap = dot - (fx - output(m, y));
    sum += gap * gap;
  }
  return sum / n;
}

double naive_global_infidelity(const Model& m, const std::vector<double>& x, const std::vector<double>& x0,
                               const std::vector<double>& phi, double p, int n, std::uint64_t seed) {
  const double fx = output(m, x);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    Rng rng(seed, static_cast<std::uint64_t>(j));
    std::vector<double> y(x.size());
    double picked = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const bool in = rng.uniform() < p;
      if (in) picked += phi[i];
      y[i] = x[i] - (in ? 1.0 : 0.0) * (x[i] - x0[i]);
    }
    const double gap = picked - (fx - output(m, y));
    sum += gap * gap;
  }
  return sum / n;
}

double naive_max_sensitivity(const Model& m, const std::vector<double>& x, double radius, int n,
                             std::uint64_t seed) {
  const auto at = [&](const std::vector<double>& v) {
    return backward(m, {{"x", Tensor::vector(v)}}, TargetSpec::scalar()).at("x").values();
  };
  const auto gx = at(x);
  double norm = 0.0;
  for (double g : gx) norm += g * g;
  norm = std::sqrt(norm);
  double worst = 0.0;
  for (int j = 0; j < n; ++j) {
    Rng rng(seed, static_cast<std::uint64_t>(j));
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + radius * (2.0 * rng.uniform() - 1.0);
    const auto gy = at(y);
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (gy[i] - gx[i]) * (gy[i] - gx[i]);
    worst = std::max(worst, std::sqrt(d));
  }
  return worst / norm;
}

}  // namespace attrkit::testing
