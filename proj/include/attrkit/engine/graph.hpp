#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "attrkit/engine/model.hpp"
#include "attrkit/engine/tensor.hpp"

namespace attrkit {

/// How ReLU (and, for deeplift_rescale, maxpool) propagate gradients.
enum class GradOverride { none, guided, deconv, deeplift_rescale };

// Below this |x - x0| the rescale rule falls back to the local gradient.
inline constexpr double kDeepLiftEpsilon = 1e-10;

/// Selects the scalar a backward pass differentiates: one element of the
/// model output, or one neuron (flat index) of an internal layer.
struct TargetSpec {
  std::optional<std::int64_t> index;
  std::optional<std::string> layer;

  static TargetSpec scalar() { return {}; }
  static TargetSpec class_index(std::int64_t i) { return {i, std::nullopt}; }
  static TargetSpec neuron(std::string layer_id, std::int64_t i) { return {i, std::move(layer_id)}; }
};

struct Objective {
  int node = -1;
  std::int64_t index = 0;
};

// Throws TargetOutOfRange, NeuronOutOfRange or UnknownLayerId.
Objective resolve_target(const Model& model, const TargetSpec& target);

/// Values placed directly at a node for a whole batch, bypassing whatever
/// would normally compute it. Layout is [batch, node.shape...] row-major.
struct Feed {
  int node = -1;
  std::vector<double> data;
};

/// Per-node batched values of one forward pass.
struct Activations {
  std::int64_t batch = 0;
  std::vector<std::vector<double>> values;  // empty where not computed
  std::vector<bool> fed;

  bool has(int node) const { return !values[static_cast<std::size_t>(node)].empty(); }
  const std::vector<double>& at(int node) const { return values.at(static_cast<std::size_t>(node)); }
};

// Rows are independent: the value of row b never depends on the batch size
// or on the other rows, down to the last bit.
Activations forward_batch(const Model& model, std::int64_t batch, const std::vector<Feed>& feeds);

struct BackwardOptions {
  GradOverride mode = GradOverride::none;
  const Activations* reference = nullptr;  // baseline activations, required by deeplift_rescale
  bool parameter_grads = false;
};

struct BackwardResult {
  std::vector<std::vector<double>> node_grads;  // gradient of the objective w.r.t. each node output
  std::map<std::string, std::vector<double>> parameter_grads;  // summed over the batch
};

// Differentiates the objective of every row with respect to everything upstream of it.
BackwardResult backward_batch(const Model& model, const Activations& acts, const Objective& objective,
                              const BackwardOptions& options = {});

struct EvalOutput {
  Tensor outputs;
  std::map<std::string, Tensor> activations;
};

/// Single-sample forward. `inputs` are keyed by input name or layer id (a
/// layer id feeds that layer's output directly).
EvalOutput eval_graph(const Model& model, const TensorMap& inputs, const std::set<std::string>& capture = {});

/// Single-sample gradients of the target. `wrt` holds node ids (gradient
/// w.r.t. that node's output) or weight names such as "fc1.weight"; empty
/// means every fed tensor. `reference` supplies baseline inputs for
/// deeplift_rescale.
TensorMap backward(const Model& model, const TensorMap& inputs, const TargetSpec& target,
                   GradOverride mode = GradOverride::none, const std::vector<std::string>& wrt = {},
                   const TensorMap* reference = nullptr);

/// Largest relative error between autodiff and central differences (h = 1e-5)
/// over every fed coordinate, plus every parameter when requested.
double gradcheck(const Model& model, const TensorMap& inputs, const TargetSpec& target,
                 bool include_parameters = false);

}  // namespace attrkit
