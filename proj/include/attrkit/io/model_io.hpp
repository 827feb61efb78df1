#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "attrkit/engine/model.hpp"

namespace attrkit::io {

using json = nlohmann::json;

// `.attrmodel` documents: JSON with inputs, layers (kind parameters inline) and output.
ModelSpec parse_model_spec(const json& doc);
json model_spec_to_json(const ModelSpec& spec);
ModelSpec read_model_spec(const std::filesystem::path& path);
void write_model_spec(const ModelSpec& spec, const std::filesystem::path& path);

/// `.attrw` binary tensor store.
///
///     "ATTR1"                      magic (version 1)
///     u32  entry count
///     per entry, sorted by name:
///       u16  name length, name bytes (UTF-8)
///       u8   dtype (0 = f32, 1 = f64)
///       u8   rank
///       u64  dims[rank]
///       raw little-endian scalars, row-major
void write_tensors(const TensorMap& tensors, std::ostream& out);
TensorMap read_tensors(std::istream& in);
void write_tensors(const TensorMap& tensors, const std::filesystem::path& path);
TensorMap read_tensors(const std::filesystem::path& path);

/// Parses and validates a spec document together with its weight file.
/// Throws ParseError, ShapeInconsistency or MissingWeight.
Model load_model(const std::filesystem::path& spec_path, const std::filesystem::path& weights_path);
Model load_model(const json& spec_doc, std::istream& weights);

}  // namespace attrkit::io
