#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attrkit/engine/model.hpp"
#include "attrkit/io/model_io.hpp"

namespace attrkit::io {

/// Display metadata for one modality of a sample.
struct ModalityInfo {
  Modality kind = Modality::tabular;
  std::vector<std::string> tokens;         // text
  std::int64_t channels = 0, height = 0, width = 0;  // image
  std::vector<std::string> feature_names;  // tabular
};

/// One (possibly multimodal) example.
struct SampleBundle {
  std::string id;
  TensorMap modalities;
  std::map<std::string, ModalityInfo> info;
  std::optional<std::int64_t> label;
};

// Throws ShapeMismatch when the bundle does not fit the model's inputs.
void validate_sample(const SampleBundle& sample, const Model& model);

json sample_to_json(const SampleBundle& sample, const std::string& tensor_file);
ModalityInfo parse_modality_info(const json& doc, const std::string& where);

/// `.attrds` directory: one "<id>.sample.json" document per sample plus the
/// "<id>.attrw" tensor store it references. Samples load in file-name order.
std::vector<SampleBundle> read_dataset(const std::filesystem::path& dir);
void write_dataset(const std::vector<SampleBundle>& samples, const std::filesystem::path& dir);

}  // namespace attrkit::io
