#include "attrkit/io/dataset.hpp"

#include <algorithm>
#include <fstream>

#include "attrkit/engine/error.hpp"

namespace attrkit::io {

void validate_sample(const SampleBundle& sample, const Model& model) {
  for (int in : model.input_nodes()) {
    const Node& node = model.node(in);
    auto it = sample.modalities.find(node.id);
    if (it == sample.modalities.end()) {
      throw Error(ErrorCode::shape_mismatch, "sample '" + sample.id + "' lacks modality '" + node.id + "'");
    }
    if (it->second.shape() != node.shape) {
      throw Error(ErrorCode::shape_mismatch, "sample '" + sample.id + "' modality '" + node.id + "' has shape " +
                                                 shape_string(it->second.shape()) + ", model declares " +
                                                 shape_string(node.shape));
    }
    auto info = sample.info.find(node.id);
    if (node.modality == Modality::text && info != sample.info.end() &&
        static_cast<std::int64_t>(info->second.tokens.size()) != node.shape.at(0)) {
      throw Error(ErrorCode::shape_mismatch, "sample '" + sample.id + "' has " +
                                                 std::to_string(info->second.tokens.size()) + " tokens for a sequence of " +
                                                 std::to_string(node.shape.at(0)));
    }
  }
  for (const auto& [name, t] : sample.modalities) {
    if (!model.find(name)) throw Error(ErrorCode::shape_mismatch, "sample modality '" + name + "' feeds no model input");
  }
}

ModalityInfo parse_modality_info(const json& doc, const std::string& where) {
  ModalityInfo info;
  const auto kind = parse_modality(doc.value("kind", std::string("tabular")));
  if (!kind) throw Error(ErrorCode::parse_error, where + ": unknown modality kind");
  info.kind = *kind;
  if (doc.contains("tokens")) info.tokens = doc.at("tokens").get<std::vector<std::string>>();
  if (doc.contains("feature_names")) info.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
  info.channels = doc.value("channels", std::int64_t{0});
  info.height = doc.value("height", std::int64_t{0});
  info.width = doc.value("width", std::int64_t{0});
  return info;
}

json sample_to_json(const SampleBundle& sample, const std::string& tensor_file) {
  json doc{{"id", sample.id}, {"tensors", tensor_file}};
  if (sample.label) doc["label"] = *sample.label;
  json mods = json::object();
  for (const auto& [name, info] : sample.info) {
    json m{{"kind", std::string(to_string(info.kind))}};
    if (!info.tokens.empty()) m["tokens"] = info.tokens;
    if (!info.feature_names.empty()) m["feature_names"] = info.feature_names;
    if (info.kind == Modality::image) {
      m["channels"] = info.channels;
      m["height"] = info.height;
      m["width"] = info.width;
    }
    mods[name] = std::move(m);
  }
  doc["modalities"] = std::move(mods);
  return doc;
}

std::vector<SampleBundle> read_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::io_error, dir.string() + " is not a dataset directory");
  std::vector<fs::path> docs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() > 12 && name.ends_with(".sample.json")) docs.push_back(entry.path());
  }
  std::sort(docs.begin(), docs.end());
  std::vector<SampleBundle> samples;
  for (const auto& path : docs) {
    std::ifstream in(path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::parse_error, path.string() + ": " + e.what());
    }
    SampleBundle s;
    s.id = doc.value("id", std::string{});
    if (s.id.empty()) throw Error(ErrorCode::parse_error, path.string() + ": missing 'id'");
    if (doc.contains("label") && !doc.at("label").is_null()) s.label = doc.at("label").get<std::int64_t>();
    s.modalities = read_tensors(dir / doc.value("tensors", s.id + ".attrw"));
    if (doc.contains("modalities")) {
      for (const auto& [name, m] : doc.at("modalities").items()) {
        s.info.emplace(name, parse_modality_info(m, path.string() + " modality '" + name + "'"));
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_dataset(const std::vector<SampleBundle>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : samples) {
    const std::string tensor_file = s.id + ".attrw";
    write_tensors(s.modalities, dir / tensor_file);
    std::ofstream out(dir / (s.id + ".sample.json"));
    if (!out) throw Error(ErrorCode::io_error, "cannot write sample '" + s.id + "'");
    out << sample_to_json(s, tensor_file).dump(2) << "\n";
  }
}

}  // namespace attrkit::io
