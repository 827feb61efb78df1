#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attrkit/engine/graph.hpp"
#include "attrkit/engine/model.hpp"

namespace attrkit {

/// Where attributions live for one model input. Continuous inputs are
/// attributed directly; a text input read by an embedding layer is
/// attributed at that layer's output, one vector per token.
struct FeaturePoint {
  std::string name;  // model input name
  int node = -1;     // graph node fed with the feature values
  Shape shape;
  Modality modality = Modality::tabular;
};

std::vector<FeaturePoint> feature_points(const Model& model);

/// Flat per-feature values of one point in attribution space.
using Point = std::vector<std::vector<double>>;

/// An input mapped into attribution space, in model-input declaration order.
struct Features {
  std::vector<FeaturePoint> points;
  Point values;

  std::size_t total_size() const;
  TensorMap to_map(DType dtype) const;   // keyed by input name
  Point from_map(const TensorMap& per_input) const;  // shape-checked
};

// Embeds text inputs; other inputs pass through. Throws ShapeMismatch.
Features to_features(const Model& model, const TensorMap& raw_inputs);

/// Batched objective values and gradients for rows of attribution-space points.
class Evaluator {
 public:
  Evaluator(const Model& model, std::vector<FeaturePoint> points);

  const Model& model() const noexcept { return model_; }
  const std::vector<FeaturePoint>& points() const noexcept { return points_; }

  Activations forward(std::span<const Point> rows) const;
  std::vector<double> values(std::span<const Point> rows, const Objective& objective) const;

  struct Gradients {
    std::vector<double> values;                  // objective per row
    std::vector<Point> features;                 // d objective / d features, per row
    std::vector<std::vector<double>> layer;      // d objective / d layer output, per row (when requested)
    std::vector<std::vector<double>> layer_out;  // layer output per row (when requested)
  };
  Gradients gradients(std::span<const Point> rows, const Objective& objective,
                      GradOverride mode = GradOverride::none, std::span<const Point> references = {},
                      std::optional<int> layer = std::nullopt) const;

 private:
  std::vector<Feed> feeds(std::span<const Point> rows) const;

  const Model& model_;
  std::vector<FeaturePoint> points_;
};

// x0 + alpha * (x - x0), elementwise.
Point interpolate(const Point& x0, const Point& x, double alpha);
Point subtract(const Point& a, const Point& b);
double total(const Point& p);

}  // namespace attrkit
