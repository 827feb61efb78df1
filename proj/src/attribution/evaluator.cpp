#include "attrkit/attribution/evaluator.hpp"

#include "attrkit/engine/error.hpp"

namespace attrkit {

std::vector<FeaturePoint> feature_points(const Model& model) {
  std::vector<FeaturePoint> points;
  for (int in : model.input_nodes()) {
    const Node& node = model.node(in);
    FeaturePoint p{node.id, in, node.shape, node.modality};
    if (node.modality == Modality::text && node.consumers.size() == 1 &&
        model.node(node.consumers.front()).kind == LayerKind::embedding) {
      p.node = node.consumers.front();
      p.shape = model.node(p.node).shape;
    }
    points.push_back(std::move(p));
  }
  return points;
}

std::size_t Features::total_size() const {
  std::size_t n = 0;
  for (const auto& v : values) n += v.size();
  return n;
}

TensorMap Features::to_map(DType dtype) const {
  TensorMap out;
  for (std::size_t f = 0; f < points.size(); ++f) out.emplace(points[f].name, Tensor(points[f].shape, values[f], dtype));
  return out;
}

Point Features::from_map(const TensorMap& per_input) const {
  Point out;
  for (const auto& p : points) {
    auto it = per_input.find(p.name);
    if (it == per_input.end()) throw Error(ErrorCode::shape_mismatch, "no tensor for input '" + p.name + "'");
    if (it->second.shape() != p.shape) {
      throw Error(ErrorCode::shape_mismatch, "'" + p.name + "' expects " + shape_string(p.shape) + ", got " +
                                                 shape_string(it->second.shape()));
    }
    out.push_back(it->second.values());
  }
  return out;
}

Features to_features(const Model& model, const TensorMap& raw_inputs) {
  Features f;
  f.points = feature_points(model);
  std::vector<Feed> feeds;
  for (const auto& p : f.points) {
    auto it = raw_inputs.find(p.name);
    if (it == raw_inputs.end()) throw Error(ErrorCode::shape_mismatch, "missing input '" + p.name + "'");
    const int input = model.index_of(p.name);
    if (it->second.shape() != model.node(input).shape) {
      throw Error(ErrorCode::shape_mismatch, "'" + p.name + "' declared " + shape_string(model.node(input).shape) +
                                                 ", got " + shape_string(it->second.shape()));
    }
    feeds.push_back(Feed{input, it->second.values()});
  }
  for (const auto& [name, t] : raw_inputs) {
    bool known = false;
    for (const auto& p : f.points) known = known || p.name == name;
    if (!known) throw Error(ErrorCode::shape_mismatch, "'" + name + "' is not a model input");
  }
  // One forward pass embeds every text input; other inputs come back rounded.
  const auto acts = forward_batch(model, 1, feeds);
  for (const auto& p : f.points) f.values.push_back(acts.at(p.node));
  return f;
}

Evaluator::Evaluator(const Model& model, std::vector<FeaturePoint> points) : model_(model), points_(std::move(points)) {}

std::vector<Feed> Evaluator::feeds(std::span<const Point> rows) const {
  std::vector<Feed> feeds;
  for (std::size_t f = 0; f < points_.size(); ++f) {
    Feed feed{points_[f].node, {}};
    const auto n = static_cast<std::size_t>(shape_size(points_[f].shape));
    feed.data.reserve(n * rows.size());
    for (const auto& row : rows) {
      if (row.size() != points_.size() || row[f].size() != n) {
        throw Error(ErrorCode::shape_mismatch, "row does not match feature '" + points_[f].name + "'");
      }
      feed.data.insert(feed.data.end(), row[f].begin(), row[f].end());
    }
    feeds.push_back(std::move(feed));
  }
  return feeds;
}

Activations Evaluator::forward(std::span<const Point> rows) const {
  return forward_batch(model_, static_cast<std::int64_t>(rows.size()), feeds(rows));
}

std::vector<double> Evaluator::values(std::span<const Point> rows, const Objective& objective) const {
  const auto acts = forward(rows);
  const auto& out = acts.at(objective.node);
  const auto n = out.size() / rows.size();
  std::vector<double> v(rows.size());
  for (std::size_t b = 0; b < rows.size(); ++b) v[b] = out[b * n + static_cast<std::size_t>(objective.index)];
  return v;
}

Evaluator::Gradients Evaluator::gradients(std::span<const Point> rows, const Objective& objective, GradOverride mode,
                                          std::span<const Point> references, std::optional<int> layer) const {
  const auto acts = forward(rows);
  std::optional<Activations> ref_acts;
  BackwardOptions options;
  options.mode = mode;
  if (mode == GradOverride::deeplift_rescale) {
    if (references.size() != rows.size()) {
      throw Error(ErrorCode::invalid_parameter, "deeplift_rescale needs one reference row per input row");
    }
    ref_acts = forward(references);
    options.reference = &*ref_acts;
  }
  const auto back = backward_batch(model_, acts, objective, options);

  Gradients g;
  const auto B = rows.size();
  {
    const auto& out = acts.at(objective.node);
    const auto n = out.size() / B;
    for (std::size_t b = 0; b < B; ++b) g.values.push_back(out[b * n + static_cast<std::size_t>(objective.index)]);
  }
  g.features.assign(B, Point(points_.size()));
  for (std::size_t f = 0; f < points_.size(); ++f) {
    const auto n = static_cast<std::size_t>(shape_size(points_[f].shape));
    const auto& grad = back.node_grads[static_cast<std::size_t>(points_[f].node)];
    for (std::size_t b = 0; b < B; ++b) {
      if (grad.empty()) {
        g.features[b][f].assign(n, 0.0);
      } else {
        g.features[b][f].assign(grad.begin() + static_cast<std::ptrdiff_t>(b * n),
                                grad.begin() + static_cast<std::ptrdiff_t>((b + 1) * n));
      }
    }
  }
  if (layer) {
    const auto n = static_cast<std::size_t>(shape_size(model_.node(*layer).shape));
    const auto& grad = back.node_grads[static_cast<std::size_t>(*layer)];
    const auto& out = acts.at(*layer);
    for (std::size_t b = 0; b < B; ++b) {
      const auto lo = static_cast<std::ptrdiff_t>(b * n);
      const auto hi = static_cast<std::ptrdiff_t>((b + 1) * n);
      g.layer.emplace_back(grad.empty() ? std::vector<double>(n, 0.0)
                                        : std::vector<double>(grad.begin() + lo, grad.begin() + hi));
      g.layer_out.emplace_back(out.begin() + lo, out.begin() + hi);
    }
  }
  return g;
}

Point interpolate(const Point& x0, const Point& x, double alpha) {
  Point out(x.size());
  for (std::size_t f = 0; f < x.size(); ++f) {
    out[f].resize(x[f].size());
    for (std::size_t i = 0; i < x[f].size(); ++i) out[f][i] = x0[f][i] + alpha * (x[f][i] - x0[f][i]);
  }
  return out;
}

Point subtract(const Point& a, const Point& b) {
  Point out(a.size());
  for (std::size_t f = 0; f < a.size(); ++f) {
    out[f].resize(a[f].size());
    for (std::size_t i = 0; i < a[f].size(); ++i) out[f][i] = a[f][i] - b[f][i];
  }
  return out;
}

double total(const Point& p) {
  double s = 0.0;
  for (const auto& v : p) {
    for (double x : v) s += x;
  }
  return s;
}

}  // namespace attrkit
