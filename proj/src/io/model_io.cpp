#include "attrkit/io/model_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "attrkit/engine/error.hpp"

namespace attrkit::io {

namespace {

constexpr std::array<char, 5> kMagic{'A', 'T', 'T', 'R', '1'};

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::parse_error, where + ": " + what);
}

std::int64_t get_int(const json& obj, const char* key, const std::string& where, std::optional<std::int64_t> fallback) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    parse_fail(where, std::string("missing '") + key + "'");
  }
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) parse_fail(where, std::string("'") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

bool get_bool(const json& obj, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  return obj.at(key).get<bool>();
}

Shape get_shape(const json& v, const std::string& where) {
  if (!v.is_array()) parse_fail(where, "shape must be an array of integers");
  Shape s;
  for (const auto& e : v) {
    if (!e.is_number_integer()) parse_fail(where, "shape must be an array of integers");
    s.push_back(e.get<std::int64_t>());
  }
  return s;
}

LayerParams parse_params(LayerKind kind, const json& obj, const std::string& where) {
  switch (kind) {
    case LayerKind::linear:
      return LinearParams{get_int(obj, "in_features", where, {}), get_int(obj, "out_features", where, {}),
                          get_bool(obj, "bias", true)};
    case LayerKind::conv2d: {
      Conv2dParams p;
      p.in_channels = get_int(obj, "in_channels", where, {});
      p.out_channels = get_int(obj, "out_channels", where, {});
      if (obj.contains("kernel") && obj.at("kernel").is_array()) {
        const auto k = get_shape(obj.at("kernel"), where);
        if (k.size() != 2) parse_fail(where, "'kernel' must be an integer or [kh, kw]");
        p.kernel_h = k[0];
        p.kernel_w = k[1];
      } else {
        p.kernel_h = p.kernel_w = get_int(obj, "kernel", where, {});
      }
      p.stride = get_int(obj, "stride", where, 1);
      p.padding = get_int(obj, "padding", where, 0);
      p.bias = get_bool(obj, "bias", true);
      return p;
    }
    case LayerKind::maxpool2d: {
      MaxPool2dParams p;
      p.kernel = get_int(obj, "kernel", where, {});
      p.stride = get_int(obj, "stride", where, p.kernel);
      return p;
    }
    case LayerKind::embedding:
      return EmbeddingParams{get_int(obj, "num_embeddings", where, {}), get_int(obj, "dim", where, {})};
    case LayerKind::mean:
      return MeanParams{get_int(obj, "axis", where, {})};
    default:
      return std::monostate{};
  }
}

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw Error(ErrorCode::parse_error, std::string("tensor file truncated while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

ModelSpec parse_model_spec(const json& doc) {
  if (!doc.is_object()) parse_fail("model", "document must be an object");
  ModelSpec spec;
  spec.name = doc.value("name", std::string{});
  if (!doc.contains("inputs") || !doc.at("inputs").is_array()) parse_fail("model", "missing 'inputs' array");
  for (const auto& in : doc.at("inputs")) {
    InputDecl decl;
    decl.name = in.value("name", std::string{});
    const std::string where = "input '" + decl.name + "'";
    if (!in.contains("shape")) parse_fail(where, "missing 'shape'");
    decl.shape = get_shape(in.at("shape"), where);
    const auto modality = parse_modality(in.value("modality", std::string("tabular")));
    if (!modality) parse_fail(where, "unknown modality");
    decl.modality = *modality;
    spec.inputs.push_back(std::move(decl));
  }
  if (!doc.contains("layers") || !doc.at("layers").is_array()) parse_fail("model", "missing 'layers' array");
  for (const auto& l : doc.at("layers")) {
    LayerDecl layer;
    layer.id = l.value("id", std::string{});
    const std::string where = "layer '" + layer.id + "'";
    const auto kind = parse_layer_kind(l.value("kind", std::string{}));
    if (!kind) parse_fail(where, "unknown kind '" + l.value("kind", std::string{}) + "'");
    layer.kind = *kind;
    if (!l.contains("inputs") || !l.at("inputs").is_array()) parse_fail(where, "missing 'inputs' array");
    for (const auto& ref : l.at("inputs")) layer.inputs.push_back(ref.get<std::string>());
    layer.params = parse_params(layer.kind, l, where);
    spec.layers.push_back(std::move(layer));
  }
  spec.output = doc.value("output", std::string{});
  if (doc.contains("class_names")) spec.class_names = doc.at("class_names").get<std::vector<std::string>>();
  return spec;
}

json model_spec_to_json(const ModelSpec& spec) {
  json doc;
  doc["format"] = "attrmodel/1";
  doc["name"] = spec.name;
  doc["inputs"] = json::array();
  for (const auto& in : spec.inputs) {
    doc["inputs"].push_back({{"name", in.name}, {"shape", in.shape}, {"modality", std::string(to_string(in.modality))}});
  }
  doc["layers"] = json::array();
  for (const auto& layer : spec.layers) {
    json l{{"id", layer.id}, {"kind", std::string(to_string(layer.kind))}, {"inputs", layer.inputs}};
    if (const auto* p = std::get_if<LinearParams>(&layer.params)) {
      l["in_features"] = p->in_features;
      l["out_features"] = p->out_features;
      l["bias"] = p->bias;
    } else if (const auto* p = std::get_if<Conv2dParams>(&layer.params)) {
      l["in_channels"] = p->in_channels;
      l["out_channels"] = p->out_channels;
      l["kernel"] = Shape{p->kernel_h, p->kernel_w};
      l["stride"] = p->stride;
      l["padding"] = p->padding;
      l["bias"] = p->bias;
    } else if (const auto* p = std::get_if<MaxPool2dParams>(&layer.params)) {
      l["kernel"] = p->kernel;
      l["stride"] = p->stride;
    } else if (const auto* p = std::get_if<EmbeddingParams>(&layer.params)) {
      l["num_embeddings"] = p->num_embeddings;
      l["dim"] = p->dim;
    } else if (const auto* p = std::get_if<MeanParams>(&layer.params)) {
      l["axis"] = p->axis;
    }
    doc["layers"].push_back(std::move(l));
  }
  doc["output"] = spec.output;
  if (!spec.class_names.empty()) doc["class_names"] = spec.class_names;
  return doc;
}

ModelSpec read_model_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
  return parse_model_spec(doc);
}

void write_model_spec(const ModelSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out << model_spec_to_json(spec).dump(2) << "\n";
}

void write_tensors(const TensorMap& tensors, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw Error(ErrorCode::io_error, "tensor name too long");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : t.data()) {
      if (t.dtype() == DType::f32) put_le<float>(out, static_cast<float>(v));
      else put_le<double>(out, v);
    }
  }
  if (!out) throw Error(ErrorCode::io_error, "failed writing tensor store");
}

TensorMap read_tensors(std::istream& in) {
  std::array<char, 5> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw Error(ErrorCode::parse_error, "not an ATTR1 tensor store (bad magic or version)");
  }
  TensorMap out;
  const auto count = get_le<std::uint32_t>(in, "entry count");
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get_le<std::uint16_t>(in, "name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw Error(ErrorCode::parse_error, "tensor file truncated in a name");
    const auto code = get_le<std::uint8_t>(in, "dtype");
    if (code > 1) throw Error(ErrorCode::parse_error, "'" + name + "' has unknown dtype code " + std::to_string(code));
    const auto dtype = static_cast<DType>(code);
    const auto rank = get_le<std::uint8_t>(in, "rank");
    Shape shape;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const auto d = get_le<std::uint64_t>(in, "dims");
      if (d > (1ULL << 40)) throw Error(ErrorCode::parse_error, "'" + name + "' has an implausible extent");
      shape.push_back(static_cast<std::int64_t>(d));
    }
    std::vector<double> data(static_cast<std::size_t>(shape_size(shape)));
    for (auto& v : data) v = dtype == DType::f32 ? get_le<float>(in, "data") : get_le<double>(in, "data");
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data), dtype)).second) {
      throw Error(ErrorCode::parse_error, "duplicate tensor '" + name + "'");
    }
  }
  return out;
}

void write_tensors(const TensorMap& tensors, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  write_tensors(tensors, out);
}

TensorMap read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  return read_tensors(in);
}

Model load_model(const std::filesystem::path& spec_path, const std::filesystem::path& weights_path) {
  return Model(read_model_spec(spec_path), read_tensors(weights_path));
}

Model load_model(const json& spec_doc, std::istream& weights) {
  return Model(parse_model_spec(spec_doc), read_tensors(weights));
}

}  // namespace attrkit::io
