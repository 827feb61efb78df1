#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "attrkit/engine/tensor.hpp"

namespace attrkit {

enum class Modality { image, text, tabular };

enum class LayerKind { input, linear, conv2d, maxpool2d, relu, flatten, embedding, mean, concat };

std::string_view to_string(Modality m);
std::string_view to_string(LayerKind k);
std::optional<Modality> parse_modality(std::string_view s);
std::optional<LayerKind> parse_layer_kind(std::string_view s);

struct LinearParams {
  std::int64_t in_features = 0;
  std::int64_t out_features = 0;
  bool bias = true;
};

struct Conv2dParams {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  bool bias = true;
};

struct MaxPool2dParams {
  std::int64_t kernel = 2;
  std::int64_t stride = 2;
};

struct EmbeddingParams {
  std::int64_t num_embeddings = 0;
  std::int64_t dim = 0;
};

struct MeanParams {
  std::int64_t axis = 0;  // item axis, batch excluded
};

using LayerParams =
    std::variant<std::monostate, LinearParams, Conv2dParams, MaxPool2dParams, EmbeddingParams, MeanParams>;

struct InputDecl {
  std::string name;
  Shape shape;
  Modality modality = Modality::tabular;
};

struct LayerDecl {
  std::string id;
  LayerKind kind = LayerKind::relu;
  std::vector<std::string> inputs;
  LayerParams params;
};

/// Declarative layer graph.
struct ModelSpec {
  std::string name;
  std::vector<InputDecl> inputs;
  std::vector<LayerDecl> layers;
  std::string output;
  std::vector<std::string> class_names;
};

/// Named parameter tensors, "<layer>.weight" and "<layer>.bias".
using WeightStore = std::map<std::string, Tensor>;

std::string weight_name(const std::string& layer_id);
std::string bias_name(const std::string& layer_id);

/// One vertex of a compiled graph. Input declarations are nodes too.
struct Node {
  std::string id;
  LayerKind kind = LayerKind::input;
  LayerParams params;
  std::vector<int> sources;
  std::vector<int> consumers;
  Shape shape;  // per-item output shape (batch excluded)
  Modality modality = Modality::tabular;  // meaningful for input nodes
  Tensor weight;
  Tensor bias;
  bool has_weight = false;
  bool has_bias = false;
};

/// A validated (ModelSpec, WeightStore) pair with nodes in topological order.
///
/// Compilation checks that the graph is acyclic, every reference resolves,
/// there is exactly one sink (the declared output), shapes propagate, and
/// weights match their declared shapes exactly.
class Model {
 public:
  Model(ModelSpec spec, WeightStore weights);

  const ModelSpec& spec() const noexcept { return spec_; }
  const WeightStore& weights() const noexcept { return weights_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& node(int index) const { return nodes_.at(static_cast<std::size_t>(index)); }

  int index_of(const std::string& id) const;  // throws UnknownLayerId
  std::optional<int> find(const std::string& id) const;
  int output_node() const noexcept { return output_; }
  const std::vector<int>& input_nodes() const noexcept { return inputs_; }
  std::int64_t output_size() const;
  bool scalar_output() const { return output_size() == 1; }
  DType dtype() const noexcept { return dtype_; }

 private:
  ModelSpec spec_;
  WeightStore weights_;
  std::vector<Node> nodes_;
  std::map<std::string, int> index_;
  std::vector<int> inputs_;
  int output_ = -1;
  DType dtype_ = DType::f64;
};

// Shapes of the parameters a layer declares, keyed by weight-store name.
std::map<std::string, Shape> expected_parameters(const LayerDecl& layer);

}  // namespace attrkit
