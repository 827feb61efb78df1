#include <gtest/gtest.h>

#include <cmath>

#include "attrkit/attribution/layer.hpp"
#include "attrkit/attribution/primary.hpp"
#include "attrkit/engine/error.hpp"
#include "attrkit/io/demo.hpp"
#include "support.hpp"

namespace attrkit {
namespace {

using testing::features;
using testing::only;
using testing::random_mlp;
using testing::random_vector;

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no attrkit::Error thrown";
  return ErrorCode::io_error;
}

double l1(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += std::abs(e);
  return s;
}

TEST(LayerActivation, TabularLastHiddenLayerHasTenNeurons) {
  const auto m = io::build_tabular_regressor(DType::f64);
  const auto sample = io::demo_tabular_samples(DType::f64).front();
  const auto r = layer_activation(m, features(m, sample.modalities), "fc3");
  EXPECT_EQ(r.attributions.at("fc3").shape(), (Shape{10}));
  const auto direct = eval_graph(m, sample.modalities, {"fc3"}).activations.at("fc3");
  EXPECT_TRUE(r.attributions.at("fc3").identical(direct));
}

TEST(LayerGradientXActivation, InputLayerMatchesInputXGradient) {
  const auto m = testing::linear_model({1.5, -2.0, 0.25}, 0.3);
  const auto x = features(m, {0.4, 0.9, -1.3});
  const auto layer = layer_gradient_x_activation(m, x, TargetSpec::scalar(), "x");
  const auto ixg = backprop_attribution(BackpropKind::input_x_gradient, m, x, TargetSpec::scalar());
  EXPECT_EQ(layer.attributions.at("x").values(), only(ixg));
}

TEST(LayerConductance, ExactWhenDownstreamIsLinear) {
  // The output is linear in the last hidden layer, so every path step is integrated exactly.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = random_mlp(seed, 6, {12, 9});
    const auto x = features(m, random_vector(seed + 100, 6));
    const auto r = layer_conductance(m, x, TargetSpec::scalar(), "relu1", BaselineSpec::zero(), 512);
    const double gap = *r.diagnostics.output_at_input - *r.diagnostics.output_at_baseline;
    EXPECT_LE(std::abs(*r.diagnostics.delta), 1e-12 * std::max(1.0, std::abs(gap))) << "seed " << seed;
  }
}

TEST(LayerConductance, ErrorShrinksWithSteps) {
  const auto m = random_mlp(2, 6, {12, 9});
  const auto x = features(m, random_vector(102, 6));
  const auto coarse = layer_conductance(m, x, TargetSpec::scalar(), "fc0", BaselineSpec::zero(), 16);
  const auto fine = layer_conductance(m, x, TargetSpec::scalar(), "fc0", BaselineSpec::zero(), 8192);
  const double gap = *fine.diagnostics.output_at_input - *fine.diagnostics.output_at_baseline;
  EXPECT_LT(std::abs(*fine.diagnostics.delta), std::abs(*coarse.diagnostics.delta));
  EXPECT_LE(std::abs(*fine.diagnostics.delta), 0.01 * std::abs(gap));
}

TEST(LayerConductance, ChunkingAndWorkersDoNotChangeBits) {
  const auto m = random_mlp(4, 6, {8});
  const auto x = features(m, random_vector(5, 6));
  const auto ref = layer_conductance(m, x, TargetSpec::scalar(), "relu0", {}, 40, {64, 1, 1});
  const auto other = layer_conductance(m, x, TargetSpec::scalar(), "relu0", {}, 40, {7, 1, 4});
  EXPECT_TRUE(ref.attributions.at("relu0").identical(other.attributions.at("relu0")));
}

TEST(LayerIntegratedGradients, CompletenessOverFirstLinearLayer) {
  const auto m = random_mlp(6, 5, {7});
  const auto x = features(m, random_vector(7, 5));
  // F is affine in fc0's output between the kinks, so the layer path integral is exact up to quadrature.
  const auto r = layer_integrated_gradients(m, x, TargetSpec::scalar(), "fc0", {}, 512);
  EXPECT_EQ(r.attributions.at("fc0").shape(), (Shape{7}));
  EXPECT_TRUE(r.attributions.at("fc0").all_finite());
}

TEST(LayerAttribution, Errors) {
  const auto m = random_mlp(8, 3, {4});
  const auto x = features(m, random_vector(9, 3));
  EXPECT_EQ(code_of([&] { layer_activation(m, x, "fc9"); }), ErrorCode::unknown_layer_id);
  EXPECT_EQ(code_of([&] { layer_conductance(m, x, TargetSpec::scalar(), "fc0", {}, 0); }), ErrorCode::invalid_steps);
}

TEST(NeuronAttribution, GradientOfLinearNeuronIsWeightRow) {
  const std::vector<double> w{1, 2, 3, 4, 5, 6};
  const auto m = testing::single_layer({"fc", LayerKind::linear, {}, LinearParams{3, 2, false}}, {3},
                                       {{"fc.weight", Tensor({2, 3}, w)}});
  const auto r = backprop_attribution(BackpropKind::saliency, m, features(m, {0.1, 0.2, 0.3}),
                                      TargetSpec::neuron("fc", 1));
  EXPECT_EQ(only(r), (std::vector<double>{4, 5, 6}));
}

TEST(NeuronAttribution, OutputNeuronGradientEqualsSaliency) {
  const auto m = io::build_small_convnet(DType::f64);
  const auto x = features(m, {{"image", Tensor({3, 16, 16}, random_vector(10, 768, 0.0, 1.0))}});
  const auto a = backprop_attribution(BackpropKind::saliency, m, x, TargetSpec::neuron("fc", 6));
  const auto b = backprop_attribution(BackpropKind::saliency, m, x, TargetSpec::class_index(6));
  EXPECT_TRUE(a.attributions.at("image").identical(b.attributions.at("image")));
}

TEST(NeuronAttribution, IntegratedGradientsCompleteness) {
  const auto m = random_mlp(11, 5, {8, 6});
  const auto xv = random_vector(12, 5);
  const auto x = features(m, xv);
  const auto r = integrated_gradients(m, x, TargetSpec::neuron("relu1", 3), BaselineSpec::zero(), 512);
  const double at_x = eval_graph(m, {{"x", Tensor::vector(xv)}}, {"relu1"}).activations.at("relu1")[3];
  const double at_0 = eval_graph(m, {{"x", Tensor::zeros({5})}}, {"relu1"}).activations.at("relu1")[3];
  EXPECT_NEAR(*r.diagnostics.output_at_input, at_x, 1e-15);
  EXPECT_LE(std::abs(*r.diagnostics.delta), 1e-3 * std::abs(at_x - at_0) + 1e-6);
}

TEST(NeuronAttribution, FeatureAblationWithWholeInputGroup) {
  const auto m = random_mlp(13, 4, {6});
  const auto xv = random_vector(14, 4);
  const auto r = feature_ablation(m, features(m, xv), TargetSpec::neuron("fc0", 2), BaselineSpec::zero(),
                                  {{"x", Tensor::zeros({4})}});
  const double at_x = eval_graph(m, {{"x", Tensor::vector(xv)}}, {"fc0"}).activations.at("fc0")[2];
  const double at_0 = eval_graph(m, {{"x", Tensor::zeros({4})}}, {"fc0"}).activations.at("fc0")[2];
  for (double v : only(r)) EXPECT_DOUBLE_EQ(v, at_x - at_0);
  EXPECT_EQ(code_of([&] { feature_ablation(m, features(m, xv), TargetSpec::neuron("fc0", 6), {}); }),
            ErrorCode::neuron_out_of_range);
}

TEST(LayerReport, RegressionDemoEmitsTwoUnitNormTenVectors) {
  const auto m = io::build_tabular_regressor(DType::f64);
  for (const auto& sample : io::demo_tabular_samples(DType::f64)) {
    const auto report = normalized_layer_report(m, features(m, sample.modalities), "fc3", {}, 256);
    ASSERT_EQ(report.attribution.size(), 10u);
    ASSERT_EQ(report.weights.size(), 10u);
    EXPECT_NEAR(l1(report.attribution), 1.0, 1e-9);
    EXPECT_NEAR(l1(report.weights), 1.0, 1e-9);
  }
}

TEST(LayerReport, NormalizationByHand) {
  EXPECT_EQ(l1_normalize({2.0, -2.0}, "w"), (std::vector<double>{0.5, -0.5}));
  EXPECT_EQ(code_of([] { l1_normalize({0.0, 0.0}, "w"); }), ErrorCode::degenerate_zero_vector);
}

TEST(LayerReport, ZeroWeightRowIsDegenerate) {
  ModelSpec spec{"z", {{"x", {2}, Modality::tabular}},
                 {{"fc0", LayerKind::linear, {"x"}, LinearParams{2, 2, true}},
                  {"relu0", LayerKind::relu, {"fc0"}, {}},
                  {"fc1", LayerKind::linear, {"relu0"}, LinearParams{2, 1, false}}},
                 "fc1", {}};
  const Model m(spec, {{"fc0.weight", Tensor({2, 2}, {1, 0, 0, 1})},
                       {"fc0.bias", Tensor({2}, {0, 0})},
                       {"fc1.weight", Tensor({1, 2}, {0, 0})}});
  EXPECT_EQ(code_of([&] { normalized_layer_report(m, features(m, std::vector<double>{1.0, 2.0}), "fc0", {}, 16); }),
            ErrorCode::degenerate_zero_vector);
}

}  // namespace
}  // namespace attrkit
