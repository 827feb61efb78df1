#include "attrkit/engine/model.hpp"

#include <algorithm>
#include <set>

#include "attrkit/engine/error.hpp"

namespace attrkit {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::image: return "image";
    case Modality::text: return "text";
    case Modality::tabular: return "tabular";
  }
  return "tabular";
}

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::input: return "input";
    case LayerKind::linear: return "linear";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::embedding: return "embedding";
    case LayerKind::mean: return "mean";
    case LayerKind::concat: return "concat";
  }
  return "input";
}

std::optional<Modality> parse_modality(std::string_view s) {
  for (auto m : {Modality::image, Modality::text, Modality::tabular}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

std::optional<LayerKind> parse_layer_kind(std::string_view s) {
  for (auto k : {LayerKind::linear, LayerKind::conv2d, LayerKind::maxpool2d, LayerKind::relu, LayerKind::flatten,
                 LayerKind::embedding, LayerKind::mean, LayerKind::concat}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::string weight_name(const std::string& layer_id) { return layer_id + ".weight"; }
std::string bias_name(const std::string& layer_id) { return layer_id + ".bias"; }

std::map<std::string, Shape> expected_parameters(const LayerDecl& layer) {
  std::map<std::string, Shape> out;
  if (const auto* p = std::get_if<LinearParams>(&layer.params)) {
    out[weight_name(layer.id)] = {p->out_features, p->in_features};
    if (p->bias) out[bias_name(layer.id)] = {p->out_features};
  } else if (const auto* p = std::get_if<Conv2dParams>(&layer.params)) {
    out[weight_name(layer.id)] = {p->out_channels, p->in_channels, p->kernel_h, p->kernel_w};
    if (p->bias) out[bias_name(layer.id)] = {p->out_channels};
  } else if (const auto* p = std::get_if<EmbeddingParams>(&layer.params)) {
    out[weight_name(layer.id)] = {p->num_embeddings, p->dim};
  }
  return out;
}

namespace {

[[noreturn]] void inconsistent(const std::string& layer, const std::string& what) {
  throw Error(ErrorCode::shape_inconsistency, "layer '" + layer + "': " + what);
}

template <typename P>
const P& params_of(const LayerDecl& layer) {
  const auto* p = std::get_if<P>(&layer.params);
  if (!p) throw Error(ErrorCode::parse_error, "layer '" + layer.id + "': parameters do not match its kind");
  return *p;
}

Shape infer_shape(const LayerDecl& layer, const std::vector<Shape>& in) {
  const auto expect_sources = [&](std::size_t n) {
    if (in.size() != n) {
      inconsistent(layer.id, "expects " + std::to_string(n) + " input(s), got " + std::to_string(in.size()));
    }
  };
  switch (layer.kind) {
    case LayerKind::linear: {
      expect_sources(1);
      const auto& p = params_of<LinearParams>(layer);
      if (p.in_features < 1 || p.out_features < 1) inconsistent(layer.id, "feature counts must be positive");
      if (in[0] != Shape{p.in_features}) {
        inconsistent(layer.id, "expects input [" + std::to_string(p.in_features) + "], got " + shape_string(in[0]));
      }
      return {p.out_features};
    }
    case LayerKind::conv2d: {
      expect_sources(1);
      const auto& p = params_of<Conv2dParams>(layer);
      if (in[0].size() != 3 || in[0][0] != p.in_channels) {
        inconsistent(layer.id, "expects [" + std::to_string(p.in_channels) + ", H, W], got " + shape_string(in[0]));
      }
      if (p.stride < 1 || p.padding < 0 || p.kernel_h < 1 || p.kernel_w < 1 || p.out_channels < 1) {
        inconsistent(layer.id, "invalid convolution geometry");
      }
      const auto oh = (in[0][1] + 2 * p.padding - p.kernel_h) / p.stride + 1;
      const auto ow = (in[0][2] + 2 * p.padding - p.kernel_w) / p.stride + 1;
      if (in[0][1] + 2 * p.padding < p.kernel_h || in[0][2] + 2 * p.padding < p.kernel_w) {
        inconsistent(layer.id, "kernel larger than padded input");
      }
      return {p.out_channels, oh, ow};
    }
    case LayerKind::maxpool2d: {
      expect_sources(1);
      const auto& p = params_of<MaxPool2dParams>(layer);
      if (in[0].size() != 3) inconsistent(layer.id, "expects [C, H, W], got " + shape_string(in[0]));
      if (p.kernel < 1 || p.stride < 1 || in[0][1] < p.kernel || in[0][2] < p.kernel) {
        inconsistent(layer.id, "invalid pooling geometry");
      }
      return {in[0][0], (in[0][1] - p.kernel) / p.stride + 1, (in[0][2] - p.kernel) / p.stride + 1};
    }
    case LayerKind::relu:
      expect_sources(1);
      return in[0];
    case LayerKind::flatten:
      expect_sources(1);
      return {shape_size(in[0])};
    case LayerKind::embedding: {
      expect_sources(1);
      const auto& p = params_of<EmbeddingParams>(layer);
      if (in[0].size() != 1) inconsistent(layer.id, "expects a token sequence [T], got " + shape_string(in[0]));
      if (p.num_embeddings < 1 || p.dim < 1) inconsistent(layer.id, "embedding table must be non-empty");
      return {in[0][0], p.dim};
    }
    case LayerKind::mean: {
      expect_sources(1);
      const auto& p = params_of<MeanParams>(layer);
      if (p.axis < 0 || p.axis >= static_cast<std::int64_t>(in[0].size())) {
        inconsistent(layer.id, "axis " + std::to_string(p.axis) + " out of range for " + shape_string(in[0]));
      }
      if (in[0][static_cast<std::size_t>(p.axis)] < 1) inconsistent(layer.id, "mean over an empty axis");
      Shape out = in[0];
      out.erase(out.begin() + p.axis);
      return out;
    }
    case LayerKind::concat: {
      if (in.size() < 2) inconsistent(layer.id, "concat needs at least two inputs");
      std::int64_t total = 0;
      for (const auto& s : in) {
        if (s.size() != 1) inconsistent(layer.id, "concat inputs must be vectors, got " + shape_string(s));
        total += s[0];
      }
      return {total};
    }
    case LayerKind::input:
      break;
  }
  inconsistent(layer.id, "unsupported layer kind");
}

}  // namespace

Model::Model(ModelSpec spec, WeightStore weights) : spec_(std::move(spec)), weights_(std::move(weights)) {
  std::map<std::string, int> decl_index;
  for (const auto& in : spec_.inputs) {
    if (in.name.empty()) throw Error(ErrorCode::parse_error, "input with empty name");
    if (!decl_index.emplace(in.name, -1).second) throw Error(ErrorCode::parse_error, "duplicate id '" + in.name + "'");
    for (auto e : in.shape) {
      if (e < 1) throw Error(ErrorCode::shape_inconsistency, "input '" + in.name + "' has a non-positive extent");
    }
  }
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& layer = spec_.layers[i];
    if (layer.id.empty()) throw Error(ErrorCode::parse_error, "layer with empty id");
    if (!decl_index.emplace(layer.id, static_cast<int>(i)).second) {
      throw Error(ErrorCode::parse_error, "duplicate id '" + layer.id + "'");
    }
  }
  for (const auto& layer : spec_.layers) {
    for (const auto& ref : layer.inputs) {
      if (!decl_index.contains(ref)) {
        throw Error(ErrorCode::parse_error, "layer '" + layer.id + "' references undeclared id '" + ref + "'");
      }
    }
  }

  // Inputs first, then layers in a stable topological order.
  for (const auto& in : spec_.inputs) {
    Node node;
    node.id = in.name;
    node.kind = LayerKind::input;
    node.shape = in.shape;
    node.modality = in.modality;
    index_[node.id] = static_cast<int>(nodes_.size());
    inputs_.push_back(static_cast<int>(nodes_.size()));
    nodes_.push_back(std::move(node));
  }
  std::vector<bool> placed(spec_.layers.size(), false);
  std::size_t remaining = spec_.layers.size();
  while (remaining > 0) {
    bool progress = false;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      if (placed[i]) continue;
      const auto& layer = spec_.layers[i];
      const bool ready = std::all_of(layer.inputs.begin(), layer.inputs.end(),
                                     [&](const std::string& ref) { return index_.contains(ref); });
      if (!ready) continue;
      Node node;
      node.id = layer.id;
      node.kind = layer.kind;
      node.params = layer.params;
      std::vector<Shape> in_shapes;
      for (const auto& ref : layer.inputs) {
        node.sources.push_back(index_.at(ref));
        in_shapes.push_back(nodes_[static_cast<std::size_t>(index_.at(ref))].shape);
      }
      if (layer.kind == LayerKind::embedding) {
        const auto& src = nodes_[static_cast<std::size_t>(node.sources.at(0))];
        if (src.kind != LayerKind::input) inconsistent(layer.id, "embedding must read a model input directly");
      }
      node.shape = infer_shape(layer, in_shapes);
      index_[node.id] = static_cast<int>(nodes_.size());
      nodes_.push_back(std::move(node));
      placed[i] = true;
      --remaining;
      progress = true;
    }
    if (!progress) throw Error(ErrorCode::parse_error, "layer graph contains a cycle");
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (int src : nodes_[i].sources) nodes_[static_cast<std::size_t>(src)].consumers.push_back(static_cast<int>(i));
  }

  std::vector<int> sinks;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].consumers.empty()) continue;
    if (nodes_[i].kind == LayerKind::input) {
      throw Error(ErrorCode::parse_error, "input '" + nodes_[i].id + "' is never consumed");
    }
    sinks.push_back(static_cast<int>(i));
  }
  if (sinks.size() != 1) {
    throw Error(ErrorCode::parse_error, "model must have exactly one output node, found " + std::to_string(sinks.size()));
  }
  output_ = sinks.front();
  if (!spec_.output.empty() && spec_.output != nodes_[static_cast<std::size_t>(output_)].id) {
    throw Error(ErrorCode::parse_error, "declared output '" + spec_.output + "' is not the graph's sink '" +
                                            nodes_[static_cast<std::size_t>(output_)].id + "'");
  }
  spec_.output = nodes_[static_cast<std::size_t>(output_)].id;
  if (nodes_[static_cast<std::size_t>(output_)].shape.size() != 1) {
    throw Error(ErrorCode::shape_inconsistency, "output '" + spec_.output + "' must be a vector, got " +
                                                    shape_string(nodes_[static_cast<std::size_t>(output_)].shape));
  }
  if (!spec_.class_names.empty() && static_cast<std::int64_t>(spec_.class_names.size()) != output_size()) {
    throw Error(ErrorCode::shape_inconsistency, "class_names has " + std::to_string(spec_.class_names.size()) +
                                                    " entries but the output has " + std::to_string(output_size()));
  }

  // Parameters: every declared one present with its exact shape, nothing extra.
  std::set<std::string> used;
  std::optional<DType> dtype;
  for (auto& node : nodes_) {
    if (node.kind == LayerKind::input) continue;
    const auto& decl = spec_.layers[static_cast<std::size_t>(decl_index.at(node.id))];
    for (const auto& [name, shape] : expected_parameters(decl)) {
      auto it = weights_.find(name);
      if (it == weights_.end()) {
        throw Error(ErrorCode::missing_weight, "layer '" + node.id + "' needs '" + name + "'");
      }
      if (it->second.shape() != shape) {
        inconsistent(node.id, "'" + name + "' has shape " + shape_string(it->second.shape()) + ", expected " +
                                  shape_string(shape));
      }
      if (dtype && *dtype != it->second.dtype()) {
        throw Error(ErrorCode::parse_error, "weights mix f32 and f64 (at '" + name + "')");
      }
      dtype = it->second.dtype();
      used.insert(name);
      if (name == weight_name(node.id)) {
        node.weight = it->second;
        node.has_weight = true;
      } else {
        node.bias = it->second;
        node.has_bias = true;
      }
    }
  }
  for (const auto& [name, tensor] : weights_) {
    if (!used.contains(name)) throw Error(ErrorCode::parse_error, "weight '" + name + "' belongs to no layer");
  }
  dtype_ = dtype.value_or(DType::f64);
}

int Model::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::unknown_layer_id, "no layer or input named '" + id + "'");
  return it->second;
}

std::optional<int> Model::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int64_t Model::output_size() const { return nodes_[static_cast<std::size_t>(output_)].shape.at(0); }

}  // namespace attrkit
