#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "attrkit/engine/model.hpp"
#include "attrkit/io/dataset.hpp"

namespace attrkit::io {

/// Bundled desk-scale models with deterministic pseudo-trained weights.
///
/// Weights come from a fixed procedure rather than training: parameterized
/// layer number L (counting from 0 in declaration order) draws from
/// Rng(model_seed, L), weights ~ N(0, 2 / fan_in) in row-major order, then
/// biases ~ U(-0.1, 0.1). The text models additionally get a sentiment
/// direction written into their embedding table and classifier rows.
struct DemoModels {
  Model text_classifier;        // embedding -> mean -> linear -> relu -> linear(2)
  Model tabular_regressor;      // 13 -> 16 -> 16 -> 10 -> 1, ReLU between
  Model small_convnet;          // conv -> relu -> pool -> conv -> relu -> flatten -> linear(10), input 3x16x16
  Model multimodal_classifier;  // text + tabular branches concatenated
  Model linear_regressor;       // 13 -> 1, a single linear layer
};

DemoModels build_demo_models(DType dtype = DType::f32);
Model build_text_classifier(DType dtype = DType::f32);
Model build_tabular_regressor(DType dtype = DType::f32);
Model build_small_convnet(DType dtype = DType::f32);
Model build_multimodal_classifier(DType dtype = DType::f32);
Model build_linear_regressor(DType dtype = DType::f32);

// Deterministic weights for any spec, using the procedure above.
WeightStore seeded_weights(const ModelSpec& spec, std::uint64_t seed, DType dtype);

const std::vector<std::string>& demo_vocabulary();
std::vector<double> encode_tokens(const std::vector<std::string>& tokens);
const std::vector<std::string>& boston_feature_names();

std::vector<SampleBundle> demo_text_samples(DType dtype = DType::f32);
std::vector<SampleBundle> demo_tabular_samples(DType dtype = DType::f32);
std::vector<SampleBundle> demo_image_samples(DType dtype = DType::f32);
std::vector<SampleBundle> demo_multimodal_samples(DType dtype = DType::f32);

/// Writes <name>.attrmodel, <name>.attrw and <name>.attrds/ for every demo.
void write_demo_bundle(const std::filesystem::path& dir, DType dtype = DType::f32);

}  // namespace attrkit::io
