#include "attrkit/io/demo.hpp"

#include <algorithm>
#include <cmath>

#include "attrkit/engine/error.hpp"
#include "attrkit/engine/rng.hpp"

namespace attrkit::io {

namespace {

constexpr std::uint64_t kTextSeed = 101;
constexpr std::uint64_t kTabularSeed = 202;
constexpr std::uint64_t kConvSeed = 303;
constexpr std::uint64_t kMultimodalSeed = 404;
constexpr std::uint64_t kLinearSeed = 505;
constexpr std::int64_t kSequence = 7;
constexpr std::int64_t kEmbedding = 8;

LayerDecl layer(std::string id, LayerKind kind, std::vector<std::string> inputs, LayerParams params = {}) {
  return LayerDecl{std::move(id), kind, std::move(inputs), std::move(params)};
}

double polarity(const std::string& word) {
  static const std::map<std::string, double> table{
      {"great", 1.0},    {"wonderful", 1.0}, {"moving", 0.8}, {"good", 0.8}, {"brilliant", 1.0},
      {"boring", -1.0},  {"terrible", -1.0}, {"awful", -1.0}, {"bad", -0.8}, {"dull", -0.8},
      {"not", -0.5}};
  auto it = table.find(word);
  return it == table.end() ? 0.0 : it->second;
}

// Rewrites a text model's embedding table and classifier so that the first
// embedding coordinate carries word polarity through to the positive logit.
void add_sentiment_direction(WeightStore& w, const std::string& emb, const std::string& fc1, std::int64_t fc1_in,
                             const std::string& fc2, DType dtype) {
  const auto& vocab = demo_vocabulary();
  auto table = w.at(weight_name(emb)).values();
  for (std::size_t v = 0; v < vocab.size(); ++v) {
    auto* row = table.data() + v * kEmbedding;
    if (v == 0) {
      std::fill(row, row + kEmbedding, 0.0);
      continue;
    }
    for (std::int64_t d = 0; d < kEmbedding; ++d) row[d] *= 0.3;
    row[0] += 1.5 * polarity(vocab[v]);
  }
  w.insert_or_assign(weight_name(emb), Tensor(w.at(weight_name(emb)).shape(), std::move(table), dtype));

  auto w1 = w.at(weight_name(fc1)).values();
  auto b1 = w.at(bias_name(fc1)).values();
  for (std::int64_t i = 0; i < fc1_in; ++i) {
    w1[static_cast<std::size_t>(i)] = i == 0 ? 2.0 : 0.0;
    w1[static_cast<std::size_t>(fc1_in + i)] = i == 0 ? -2.0 : 0.0;
  }
  b1[0] = b1[1] = 0.0;
  w.insert_or_assign(weight_name(fc1), Tensor(w.at(weight_name(fc1)).shape(), std::move(w1), dtype));
  w.insert_or_assign(bias_name(fc1), Tensor(w.at(bias_name(fc1)).shape(), std::move(b1), dtype));

  auto w2 = w.at(weight_name(fc2)).values();
  const auto hidden = w.at(weight_name(fc2)).shape()[1];
  for (auto& v : w2) v *= 0.3;
  w2[0] -= 1.5;
  w2[1] += 1.5;
  w2[static_cast<std::size_t>(hidden)] += 1.5;
  w2[static_cast<std::size_t>(hidden + 1)] -= 1.5;
  w.insert_or_assign(weight_name(fc2), Tensor(w.at(weight_name(fc2)).shape(), std::move(w2), dtype));
}

ModelSpec text_spec() {
  ModelSpec s;
  s.name = "text_classifier";
  s.inputs = {{"text", {kSequence}, Modality::text}};
  const auto vocab = static_cast<std::int64_t>(demo_vocabulary().size());
  s.layers = {layer("embed", LayerKind::embedding, {"text"}, EmbeddingParams{vocab, kEmbedding}),
              layer("pool", LayerKind::mean, {"embed"}, MeanParams{0}),
              layer("fc1", LayerKind::linear, {"pool"}, LinearParams{kEmbedding, 8, true}),
              layer("relu1", LayerKind::relu, {"fc1"}),
              layer("fc2", LayerKind::linear, {"relu1"}, LinearParams{8, 2, true})};
  s.output = "fc2";
  s.class_names = {"negative", "positive"};
  return s;
}

ModelSpec tabular_spec() {
  ModelSpec s;
  s.name = "tabular_regressor";
  s.inputs = {{"features", {13}, Modality::tabular}};
  s.layers = {layer("fc1", LayerKind::linear, {"features"}, LinearParams{13, 16, true}),
              layer("relu1", LayerKind::relu, {"fc1"}),
              layer("fc2", LayerKind::linear, {"relu1"}, LinearParams{16, 16, true}),
              layer("relu2", LayerKind::relu, {"fc2"}),
              layer("fc3", LayerKind::linear, {"relu2"}, LinearParams{16, 10, true}),
              layer("relu3", LayerKind::relu, {"fc3"}),
              layer("fc4", LayerKind::linear, {"relu3"}, LinearParams{10, 1, true})};
  s.output = "fc4";
  return s;
}

ModelSpec convnet_spec() {
  ModelSpec s;
  s.name = "small_convnet";
  s.inputs = {{"image", {3, 16, 16}, Modality::image}};
  Conv2dParams c1{3, 4, 3, 3, 1, 1, true};
  Conv2dParams c2{4, 8, 3, 3, 1, 1, true};
  s.layers = {layer("conv1", LayerKind::conv2d, {"image"}, c1),
              layer("relu1", LayerKind::relu, {"conv1"}),
              layer("pool1", LayerKind::maxpool2d, {"relu1"}, MaxPool2dParams{2, 2}),
              layer("conv2", LayerKind::conv2d, {"pool1"}, c2),
              layer("relu2", LayerKind::relu, {"conv2"}),
              layer("flatten", LayerKind::flatten, {"relu2"}),
              layer("fc", LayerKind::linear, {"flatten"}, LinearParams{8 * 8 * 8, 10, true})};
  s.output = "fc";
  for (int c = 0; c < 10; ++c) s.class_names.push_back("class_" + std::to_string(c));
  return s;
}

ModelSpec multimodal_spec() {
  ModelSpec s;
  s.name = "multimodal_classifier";
  s.inputs = {{"text", {kSequence}, Modality::text}, {"features", {5}, Modality::tabular}};
  const auto vocab = static_cast<std::int64_t>(demo_vocabulary().size());
  s.layers = {layer("embed", LayerKind::embedding, {"text"}, EmbeddingParams{vocab, kEmbedding}),
              layer("pool", LayerKind::mean, {"embed"}, MeanParams{0}),
              layer("joined", LayerKind::concat, {"pool", "features"}),
              layer("fc1", LayerKind::linear, {"joined"}, LinearParams{kEmbedding + 5, 8, true}),
              layer("relu1", LayerKind::relu, {"fc1"}),
              layer("fc2", LayerKind::linear, {"relu1"}, LinearParams{8, 2, true})};
  s.output = "fc2";
  s.class_names = {"negative", "positive"};
  return s;
}

ModelSpec linear_spec() {
  ModelSpec s;
  s.name = "linear_regressor";
  s.inputs = {{"features", {13}, Modality::tabular}};
  s.layers = {layer("fc", LayerKind::linear, {"features"}, LinearParams{13, 1, true})};
  s.output = "fc";
  return s;
}

Tensor image_tensor(std::uint64_t seed, std::uint64_t stream, DType dtype) {
  Rng rng(seed, stream);
  const auto cy = static_cast<std::int64_t>(rng.below(12));
  const auto cx = static_cast<std::int64_t>(rng.below(12));
  std::vector<double> data(3 * 16 * 16);
  for (std::int64_t c = 0; c < 3; ++c) {
    const double tint = 0.5 + 0.5 * rng.uniform();
    for (std::int64_t y = 0; y < 16; ++y) {
      for (std::int64_t x = 0; x < 16; ++x) {
        const bool inside = y >= cy && y < cy + 4 && x >= cx && x < cx + 4;
        data[static_cast<std::size_t>((c * 16 + y) * 16 + x)] = (inside ? tint : 0.0) + rng.normal(0.0, 0.05);
      }
    }
  }
  return Tensor({3, 16, 16}, std::move(data), dtype);
}

std::string sample_id(const std::string& prefix, std::size_t i) {
  return prefix + (i < 10 ? "0" : "") + std::to_string(i);
}

const std::vector<std::vector<std::string>>& demo_sentences() {
  static const std::vector<std::vector<std::string>> sentences{
      {"the", "acting", "was", "wonderful", "and", "truly", "moving"},
      {"the", "plot", "was", "dull", "and", "very", "boring"},
      {"a", "good", "film", "with", "a", "great", "story"},
      {"the", "movie", "is", "not", "good", "at", "all"},
      {"an", "awful", "film", "with", "a", "terrible", "plot"},
  };
  return sentences;
}

}  // namespace

WeightStore seeded_weights(const ModelSpec& spec, std::uint64_t seed, DType dtype) {
  WeightStore w;
  std::uint64_t index = 0;
  for (const auto& l : spec.layers) {
    const auto params = expected_parameters(l);
    if (params.empty()) continue;
    Rng rng(seed, index++);
    const auto& wshape = params.at(weight_name(l.id));
    std::int64_t fan_in = 1;
    for (std::size_t i = 1; i < wshape.size(); ++i) fan_in *= wshape[i];
    std::vector<double> values(static_cast<std::size_t>(shape_size(wshape)));
    const double stdev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : values) v = rng.normal(0.0, stdev);
    w.emplace(weight_name(l.id), Tensor(wshape, std::move(values), dtype));
    if (auto b = params.find(bias_name(l.id)); b != params.end()) {
      std::vector<double> bias(static_cast<std::size_t>(shape_size(b->second)));
      for (auto& v : bias) v = rng.uniform(-0.1, 0.1);
      w.emplace(b->first, Tensor(b->second, std::move(bias), dtype));
    }
  }
  return w;
}

const std::vector<std::string>& demo_vocabulary() {
  static const std::vector<std::string> vocab{
      "<pad>", "the",  "a",     "an",    "movie", "film",      "was",    "is",       "and",   "with",
      "acting", "plot", "story", "truly", "very",  "at",        "all",    "not",      "great", "wonderful",
      "moving", "good", "brilliant", "boring", "terrible", "awful", "bad", "dull"};
  return vocab;
}

std::vector<double> encode_tokens(const std::vector<std::string>& tokens) {
  const auto& vocab = demo_vocabulary();
  std::vector<double> ids;
  for (const auto& t : tokens) {
    auto it = std::find(vocab.begin(), vocab.end(), t);
    if (it == vocab.end()) throw Error(ErrorCode::invalid_parameter, "token '" + t + "' not in the demo vocabulary");
    ids.push_back(static_cast<double>(it - vocab.begin()));
  }
  return ids;
}

const std::vector<std::string>& boston_feature_names() {
  static const std::vector<std::string> names{"CRIM", "ZN",  "INDUS",   "CHAS", "NOX",  "RM",   "AGE",
                                              "DIS",  "RAD", "TAX",     "PTRATIO", "B", "LSTAT"};
  return names;
}

Model build_text_classifier(DType dtype) {
  auto spec = text_spec();
  auto w = seeded_weights(spec, kTextSeed, dtype);
  add_sentiment_direction(w, "embed", "fc1", kEmbedding, "fc2", dtype);
  return Model(std::move(spec), std::move(w));
}

Model build_tabular_regressor(DType dtype) {
  auto spec = tabular_spec();
  return Model(spec, seeded_weights(spec, kTabularSeed, dtype));
}

Model build_small_convnet(DType dtype) {
  auto spec = convnet_spec();
  return Model(spec, seeded_weights(spec, kConvSeed, dtype));
}

Model build_multimodal_classifier(DType dtype) {
  auto spec = multimodal_spec();
  auto w = seeded_weights(spec, kMultimodalSeed, dtype);
  add_sentiment_direction(w, "embed", "fc1", kEmbedding + 5, "fc2", dtype);
  return Model(std::move(spec), std::move(w));
}

Model build_linear_regressor(DType dtype) {
  auto spec = linear_spec();
  return Model(spec, seeded_weights(spec, kLinearSeed, dtype));
}

DemoModels build_demo_models(DType dtype) {
  return {build_text_classifier(dtype), build_tabular_regressor(dtype), build_small_convnet(dtype),
          build_multimodal_classifier(dtype), build_linear_regressor(dtype)};
}

std::vector<SampleBundle> demo_text_samples(DType dtype) {
  std::vector<SampleBundle> out;
  const auto& sentences = demo_sentences();
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    SampleBundle s;
    s.id = sample_id("text", i);
    s.modalities.emplace("text", Tensor({kSequence}, encode_tokens(sentences[i]), dtype));
    ModalityInfo info;
    info.kind = Modality::text;
    info.tokens = sentences[i];
    s.info.emplace("text", std::move(info));
    s.label = (i == 0 || i == 2) ? 1 : 0;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SampleBundle> demo_tabular_samples(DType dtype) {
  std::vector<SampleBundle> out;
  for (std::size_t i = 0; i < 8; ++i) {
    Rng rng(kTabularSeed + 1, i);
    std::vector<double> x(13);
    for (auto& v : x) v = rng.normal();
    SampleBundle s;
    s.id = sample_id("house", i);
    s.modalities.emplace("features", Tensor({13}, std::move(x), dtype));
    ModalityInfo info;
    info.kind = Modality::tabular;
    info.feature_names = boston_feature_names();
    s.info.emplace("features", std::move(info));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SampleBundle> demo_image_samples(DType dtype) {
  std::vector<SampleBundle> out;
  for (std::size_t i = 0; i < 6; ++i) {
    SampleBundle s;
    s.id = sample_id("image", i);
    s.modalities.emplace("image", image_tensor(kConvSeed + 1, i, dtype));
    ModalityInfo info;
    info.kind = Modality::image;
    info.channels = 3;
    info.height = 16;
    info.width = 16;
    s.info.emplace("image", std::move(info));
    s.label = static_cast<std::int64_t>(i % 10);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SampleBundle> demo_multimodal_samples(DType dtype) {
  std::vector<SampleBundle> out;
  const auto& sentences = demo_sentences();
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    Rng rng(kMultimodalSeed + 1, i);
    std::vector<double> x(5);
    for (auto& v : x) v = rng.normal();
    SampleBundle s;
    s.id = sample_id("pair", i);
    s.modalities.emplace("text", Tensor({kSequence}, encode_tokens(sentences[i]), dtype));
    s.modalities.emplace("features", Tensor({5}, std::move(x), dtype));
    ModalityInfo text;
    text.kind = Modality::text;
    text.tokens = sentences[i];
    ModalityInfo tab;
    tab.kind = Modality::tabular;
    tab.feature_names = {"f0", "f1", "f2", "f3", "f4"};
    s.info.emplace("text", std::move(text));
    s.info.emplace("features", std::move(tab));
    out.push_back(std::move(s));
  }
  return out;
}

void write_demo_bundle(const std::filesystem::path& dir, DType dtype) {
  std::filesystem::create_directories(dir);
  const auto models = build_demo_models(dtype);
  const std::vector<std::pair<const Model*, std::vector<SampleBundle>>> demos{
      {&models.text_classifier, demo_text_samples(dtype)},
      {&models.tabular_regressor, demo_tabular_samples(dtype)},
      {&models.small_convnet, demo_image_samples(dtype)},
      {&models.multimodal_classifier, demo_multimodal_samples(dtype)},
      {&models.linear_regressor, demo_tabular_samples(dtype)},
  };
  for (const auto& [model, samples] : demos) {
    const auto& name = model->spec().name;
    write_model_spec(model->spec(), dir / (name + ".attrmodel"));
    write_tensors(model->weights(), dir / (name + ".attrw"));
    write_dataset(samples, dir / (name + ".attrds"));
  }
}

}  // namespace attrkit::io
