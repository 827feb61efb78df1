#include <gtest/gtest.h>

#include <cmath>

#include "attrkit/attribution/primary.hpp"
#include "attrkit/attribution/registry.hpp"
#include "attrkit/engine/error.hpp"
#include "attrkit/engine/rng.hpp"
#include "attrkit/io/demo.hpp"
#include "support.hpp"

namespace attrkit {
namespace {

using testing::features;
using testing::linear_model;
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

void expect_near_all(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "at " << i;
}

void expect_identical(const AttributionResult& a, const AttributionResult& b) {
  ASSERT_EQ(a.attributions.size(), b.attributions.size());
  for (const auto& [name, t] : a.attributions) EXPECT_TRUE(t.identical(b.attributions.at(name))) << name;
}

BaselineSpec fill_x(const std::vector<double>& v) { return BaselineSpec::of({{"x", Tensor::vector(v)}}); }

const std::vector<double> kW{2.0, -1.0, 0.5, 3.0};
const std::vector<double> kX{0.3, -1.2, 2.0, 0.7};
const std::vector<double> kX0{-0.5, 0.25, 1.0, 0.1};

std::vector<double> times(const std::vector<double>& w, const std::vector<double>& d) {
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] * d[i];
  return out;
}

std::vector<double> minus(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

TEST(Baseline, Resolution) {
  const Tensor like({3}, {1, 2, 3});
  EXPECT_EQ(resolve_baseline(BaselineSpec::zero(), "x", like).front().values(), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(resolve_baseline(BaselineSpec::scalar_fill(0.5), "x", Tensor({2}, {1, 2})).front().values(),
            (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(code_of([&] { resolve_baseline(BaselineSpec::of({{"x", Tensor({2}, {1, 2})}}), "x", like); }),
            ErrorCode::shape_mismatch);
  EXPECT_EQ(code_of([&] { resolve_baseline(BaselineSpec::of_distribution({}), "x", like); }),
            ErrorCode::empty_baseline_distribution);
  EXPECT_EQ(resolve_baseline(BaselineSpec::of_distribution({{}, {}}), "x", like).size(), 2u);
}

TEST(LinearOracles, Saliency) {
  const auto m = linear_model(kW, 0.7);
  expect_near_all(only(backprop_attribution(BackpropKind::saliency, m, features(m, kX), TargetSpec::scalar())), kW,
                  1e-10);
}

TEST(LinearOracles, InputXGradient) {
  const auto m = linear_model(kW, 0.7);
  expect_near_all(only(backprop_attribution(BackpropKind::input_x_gradient, m, features(m, kX), TargetSpec::scalar())),
                  times(kW, kX), 1e-10);
}

TEST(LinearOracles, IntegratedGradients) {
  const auto m = linear_model(kW, 0.7);
  const auto r = integrated_gradients(m, features(m, kX), TargetSpec::scalar(), fill_x(kX0), 50);
  expect_near_all(only(r), times(kW, minus(kX, kX0)), 1e-10);
  EXPECT_NEAR(*r.diagnostics.delta, 0.0, 1e-10);
}

TEST(LinearOracles, DeepLift) {
  const auto m = linear_model(kW, 0.7);
  const auto r = deeplift(m, features(m, kX), TargetSpec::scalar(), fill_x(kX0));
  expect_near_all(only(r), times(kW, minus(kX, kX0)), 1e-10);
  EXPECT_NEAR(*r.diagnostics.delta, 0.0, 1e-10);
}

TEST(LinearOracles, FeatureAblationWithZeroBias) {
  const auto m = linear_model(kW, 0.0);
  const auto r = feature_ablation(m, features(m, kX), TargetSpec::scalar(), BaselineSpec::zero());
  expect_near_all(only(r), times(kW, kX), 1e-10);
}

TEST(LinearOracles, GradientShapWithConstantBaseline) {
  const auto m = linear_model(kW, 0.7);
  const auto r = gradient_shap(m, features(m, kX), TargetSpec::scalar(), fill_x(kX0), 20, 0.0, 5);
  EXPECT_EQ(only(r), times(kW, minus(kX, kX0)));
}

TEST(IntegratedGradients, MidpointRuleOnSingleRelu) {
  // Path -2 + 4a at a = 1/8, 3/8, 5/8, 7/8 is positive at half the points.
  ModelSpec spec{"r", {{"x", {1}, Modality::tabular}}, {{"r", LayerKind::relu, {"x"}, {}}}, "r", {}};
  const Model m(spec, {});
  const auto r = integrated_gradients(m, features(m, {2.0}), TargetSpec::scalar(), fill_x({-2.0}), 4);
  EXPECT_DOUBLE_EQ(only(r)[0], 2.0);
  EXPECT_DOUBLE_EQ(*r.diagnostics.delta, 0.0);
}

TEST(IntegratedGradients, ChunkSizeDoesNotChangeBits) {
  const auto m = random_mlp(3, 6, {8, 8});
  const auto x = features(m, random_vector(4, 6));
  const auto ref = integrated_gradients(m, x, TargetSpec::scalar(), BaselineSpec::zero(), 64, {64, 1, 1});
  for (std::int64_t chunk : {1, 7}) {
    expect_identical(integrated_gradients(m, x, TargetSpec::scalar(), BaselineSpec::zero(), 64, {chunk, 1, 1}), ref);
  }
}

TEST(IntegratedGradients, RejectsBadSteps) {
  const auto m = linear_model(kW);
  EXPECT_EQ(code_of([&] { integrated_gradients(m, features(m, kX), TargetSpec::scalar(), {}, 0); }),
            ErrorCode::invalid_steps);
}

TEST(DeepLift, SingleReluRescale) {
  ModelSpec spec{"r", {{"x", {1}, Modality::tabular}}, {{"r", LayerKind::relu, {"x"}, {}}}, "r", {}};
  const Model m(spec, {});
  const auto r = deeplift(m, features(m, {2.0}), TargetSpec::scalar(), fill_x({-2.0}));
  EXPECT_DOUBLE_EQ(only(r)[0], 2.0);
}

TEST(DeepLift, ShapOverOneMemberEqualsPlain) {
  const auto m = random_mlp(5, 5, {7});
  const auto x = features(m, random_vector(6, 5));
  const auto b = random_vector(7, 5);
  const auto plain = deeplift(m, x, TargetSpec::scalar(), fill_x(b));
  const auto shap = deeplift(m, x, TargetSpec::scalar(), BaselineSpec::of_distribution({{{"x", Tensor::vector(b)}}}), true);
  expect_identical(plain, shap);
}

TEST(DeepLift, ConvnetCompleteness) {
  const auto m = io::build_small_convnet(DType::f64);
  const auto x = features(m, {{"image", Tensor({3, 16, 16}, random_vector(8, 768, 0.0, 1.0))}});
  const auto r = deeplift(m, x, TargetSpec::class_index(2), BaselineSpec::zero());
  const double gap = *r.diagnostics.output_at_input - *r.diagnostics.output_at_baseline;
  EXPECT_LE(std::abs(*r.diagnostics.delta), 1e-3 * std::abs(gap) + 1e-6);
}

TEST(GlobalMethods, VanishWhereInputEqualsBaseline) {
  const auto m = random_mlp(9, 6, {10, 5});
  auto xv = random_vector(10, 6);
  auto bv = random_vector(11, 6);
  bv[1] = xv[1];
  bv[4] = xv[4];
  const auto x = features(m, xv);
  for (const auto& r : {integrated_gradients(m, x, TargetSpec::scalar(), fill_x(bv), 32),
                        deeplift(m, x, TargetSpec::scalar(), fill_x(bv)),
                        gradient_shap(m, x, TargetSpec::scalar(), fill_x(bv), 8, 0.1, 3)}) {
    EXPECT_EQ(only(r)[1], 0.0) << r.method;
    EXPECT_EQ(only(r)[4], 0.0) << r.method;
  }
}

TEST(GradientShap, SingleSampleIsGradientAtDrawnPoint) {
  const auto m = random_mlp(12, 2, {4});
  const std::vector<double> xv{0.8, -0.4}, bv{0.1, 0.3};
  const std::uint64_t seed = 17;
  const auto r = gradient_shap(m, features(m, xv), TargetSpec::scalar(), fill_x(bv), 1, 0.0, seed);
  // One baseline: no index is drawn, the first word sets alpha.
  const double alpha = Rng(seed, 0).uniform();
  const std::vector<double> point{bv[0] + alpha * (xv[0] - bv[0]), bv[1] + alpha * (xv[1] - bv[1])};
  const auto g = backward(m, {{"x", Tensor::vector(point)}}, TargetSpec::scalar()).at("x");
  EXPECT_DOUBLE_EQ(only(r)[0], g[0] * (xv[0] - bv[0]));
  EXPECT_DOUBLE_EQ(only(r)[1], g[1] * (xv[1] - bv[1]));
}

TEST(GradientShap, SeedDeterminism) {
  const auto m = random_mlp(13, 4, {6});
  const auto x = features(m, random_vector(14, 4));
  const auto dist = BaselineSpec::of_distribution(
      {{{"x", Tensor::vector(random_vector(15, 4))}}, {{"x", Tensor::vector(random_vector(16, 4))}}});
  const auto a = gradient_shap(m, x, TargetSpec::scalar(), dist, 16, 0.2, 99);
  expect_identical(a, gradient_shap(m, x, TargetSpec::scalar(), dist, 16, 0.2, 99));
  EXPECT_FALSE(a.attributions.at("x").identical(gradient_shap(m, x, TargetSpec::scalar(), dist, 16, 0.2, 100).attributions.at("x")));
}

// x[1, 4, 4] -> conv 1x1 identity -> flatten -> fc with constant weight c
Model unit_cam_model(double c) {
  ModelSpec spec{"cam", {{"x", {1, 4, 4}, Modality::image}},
                 {{"conv", LayerKind::conv2d, {"x"}, Conv2dParams{1, 1, 1, 1, 1, 0, false}},
                  {"flat", LayerKind::flatten, {"conv"}, {}}, {"fc", LayerKind::linear, {"flat"}, LinearParams{16, 1, false}}},
                 "fc", {}};
  return Model(spec, {{"conv.weight", Tensor({1, 1, 1, 1}, {1.0})}, {"fc.weight", Tensor::full({1, 16}, c)}});
}

TEST(GradCam, UnitGradientsGiveReluOfActivation) {
  const auto m = unit_cam_model(1.0);
  const auto xv = random_vector(20, 16);
  const auto r = gradcam(m, features(m, {{"x", Tensor({1, 4, 4}, xv)}}), TargetSpec::scalar(), "conv", false);
  const auto& map = r.attributions.at("conv");
  EXPECT_EQ(map.shape(), (Shape{4, 4}));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(map[i], std::max(xv[i], 0.0));
}

TEST(GradCam, NegativeEvidenceGivesZeroMap) {
  const auto m = unit_cam_model(-1.0);
  const auto r = gradcam(m, features(m, {{"x", Tensor({1, 4, 4}, random_vector(21, 16, 0.1, 1.0))}}),
                         TargetSpec::scalar(), "conv", false);
  for (double v : r.attributions.at("conv").values()) EXPECT_EQ(v, 0.0);
}

TEST(GradCam, GuidedVariantHasInputShape) {
  const auto m = io::build_small_convnet(DType::f64);
  const auto x = features(m, {{"image", Tensor({3, 16, 16}, random_vector(22, 768, 0.0, 1.0))}});
  const auto r = gradcam(m, x, TargetSpec::class_index(1), "conv2", true);
  EXPECT_EQ(r.attributions.at("image").shape(), (Shape{3, 16, 16}));
  EXPECT_EQ(code_of([&] { gradcam(m, x, TargetSpec::class_index(1), "relu2", false); }), ErrorCode::not_a_conv_layer);
}

TEST(GradCam, BilinearUpsamplingUsesHalfPixelCenters) {
  const auto up = upsample_bilinear({0, 1, 2, 3}, 2, 2, 4, 4);
  expect_near_all(up, {0, 0.25, 0.75, 1, 0.5, 0.75, 1.25, 1.5, 1.5, 1.75, 2.25, 2.5, 2, 2.25, 2.75, 3}, 1e-15);
}

TEST(FeatureAblation, GroupsShareTheirDifference) {
  const auto m = linear_model(kW, 0.4);
  const auto r = feature_ablation(m, features(m, kX), TargetSpec::scalar(), BaselineSpec::zero(),
                                  {{"x", Tensor::vector({0, 0, 1, 2})}});
  const double g0 = kW[0] * kX[0] + kW[1] * kX[1];
  expect_near_all(only(r), {g0, g0, kW[2] * kX[2], kW[3] * kX[3]}, 1e-12);
}

TEST(FeatureAblation, MaskShapeMismatch) {
  const auto m = linear_model(kW);
  EXPECT_EQ(code_of([&] {
              feature_ablation(m, features(m, kX), TargetSpec::scalar(), {}, {{"x", Tensor::vector({0, 1})}});
            }),
            ErrorCode::mask_shape_mismatch);
}

TEST(FeatureAblation, PerturbationsPerEvalDoesNotChangeBits) {
  const auto m = io::build_small_convnet(DType::f64);
  const auto x = features(m, {{"image", Tensor({3, 16, 16}, random_vector(23, 768, 0.0, 1.0))}});
  std::vector<double> groups(768);
  for (std::size_t i = 0; i < 768; ++i) groups[i] = static_cast<double>(i % 256);
  const TensorMap mask{{"image", Tensor({3, 16, 16}, groups)}};
  const auto ref = feature_ablation(m, x, TargetSpec::class_index(0), {}, mask, {64, 1, 1});
  for (std::int64_t ppe : {4, 16}) {
    expect_identical(feature_ablation(m, x, TargetSpec::class_index(0), {}, mask, {64, ppe, 1}), ref);
  }
}

TEST(Occlusion, WholeInputWindow) {
  const auto m = random_mlp(24, 5, {6});
  const auto x = features(m, random_vector(25, 5));
  const auto r = occlusion(m, x, TargetSpec::scalar(), BaselineSpec::zero(), {{"x", Window{{5}, {1}}}});
  const double drop = *r.diagnostics.output_at_input -
                      eval_graph(m, {{"x", Tensor::zeros({5})}}).outputs[0];
  for (double v : only(r)) EXPECT_DOUBLE_EQ(v, drop);
}

TEST(Occlusion, OverlapsAreAveraged) {
  const auto m = linear_model({1.0, 2.0, 4.0}, 0.0);
  const auto r = occlusion(m, features(m, {1.0, 1.0, 1.0}), TargetSpec::scalar(), {}, {{"*", Window{{2}, {1}}}});
  expect_near_all(only(r), {3.0, 4.5, 6.0}, 1e-12);
}

TEST(Occlusion, WindowTooLarge) {
  const auto m = linear_model(kW);
  EXPECT_EQ(code_of([&] { occlusion(m, features(m, kX), TargetSpec::scalar(), {}, {{"x", Window{{5}, {1}}}}); }),
            ErrorCode::window_too_large);
}

TEST(Occlusion, StridedImageWindowsAreSchedulingInvariant) {
  const auto m = io::build_small_convnet(DType::f64);
  const auto x = features(m, {{"image", Tensor({3, 16, 16}, random_vector(26, 768, 0.0, 1.0))}});
  const std::map<std::string, Window> w{{"image", Window{{3, 4, 4}, {3, 2, 2}}}};
  const auto ref = occlusion(m, x, TargetSpec::class_index(5), {}, w, {64, 1, 1});
  EXPECT_EQ(*ref.diagnostics.samples, 49);
  expect_identical(occlusion(m, x, TargetSpec::class_index(5), {}, w, {64, 16, 4}), ref);
}

TEST(NoiseTunnel, SingleNoiselessSampleEqualsBase) {
  const auto m = random_mlp(27, 5, {6});
  const auto x = features(m, random_vector(28, 5));
  AttributionRequest req{"integrated_gradients", TargetSpec::scalar(), BaselineSpec::zero(), {}};
  const auto base = make_attributor(m, req);
  expect_identical(noise_tunnel(base, x, NoiseTunnelType::smoothgrad, 1, 0.0, 4), base(x));
}

TEST(NoiseTunnel, VarGradWithoutNoiseIsZero) {
  const auto m = random_mlp(29, 5, {6});
  const auto x = features(m, random_vector(30, 5));
  AttributionRequest req{"saliency", TargetSpec::scalar(), {}, {}};
  const auto r = noise_tunnel(make_attributor(m, req), x, NoiseTunnelType::vargrad, 7, 0.0, 1);
  for (double v : only(r)) EXPECT_EQ(v, 0.0);
}

TEST(NoiseTunnel, SmoothGradOfLinearSaliencyIsTheWeights) {
  const auto m = linear_model(kW, 0.3);
  AttributionRequest req{"saliency", TargetSpec::scalar(), {}, {}};
  EXPECT_EQ(only(noise_tunnel(make_attributor(m, req), features(m, kX), NoiseTunnelType::smoothgrad, 9, 0.5, 2)), kW);
}

TEST(NoiseTunnel, SeedsAreReproducibleAndSamplesChecked) {
  const auto m = random_mlp(31, 4, {5});
  const auto x = features(m, random_vector(32, 4));
  AttributionRequest req{"saliency", TargetSpec::scalar(), {}, {}};
  const auto base = make_attributor(m, req);
  for (auto type : {NoiseTunnelType::smoothgrad, NoiseTunnelType::smoothgrad_sq, NoiseTunnelType::vargrad}) {
    expect_identical(noise_tunnel(base, x, type, 6, 0.3, 8), noise_tunnel(base, x, type, 6, 0.3, 8));
  }
  EXPECT_EQ(code_of([&] { noise_tunnel(base, x, NoiseTunnelType::vargrad, 1, 0.3, 8); }),
            ErrorCode::insufficient_samples);
  EXPECT_EQ(code_of([&] { noise_tunnel(base, x, NoiseTunnelType::smoothgrad, 0, 0.3, 8); }),
            ErrorCode::insufficient_samples);
}

TEST(Registry, EveryMethodKeepsTheInputShape) {
  const auto m = io::build_small_convnet(DType::f64);
  const auto x = features(m, {{"image", Tensor({3, 16, 16}, random_vector(33, 768, 0.0, 1.0))}});
  for (const auto& info : method_roster()) {
    if (info.scope != "primary" || info.id == "gradcam") continue;
    AttributionRequest req{info.id, TargetSpec::class_index(4), {}, {}};
    req.params.steps = 8;
    req.params.layer = "conv2";
    req.params.windows["*"] = Window{{3, 8, 8}, {3, 8, 8}};
    if (info.id == "deeplift_shap" || info.id == "gradient_shap") {
      req.baseline = BaselineSpec::of_distribution({{}, {{"image", Tensor::full({3, 16, 16}, 0.5)}}});
    }
    const auto r = attribute(m, x, req);
    ASSERT_EQ(r.attributions.count("image"), 1u) << info.id;
    EXPECT_EQ(r.attributions.at("image").shape(), (Shape{3, 16, 16})) << info.id;
    EXPECT_TRUE(r.attributions.at("image").all_finite()) << info.id;
  }
}

TEST(Registry, UnknownMethodListsTheRoster) {
  const auto m = linear_model(kW);
  try {
    attribute(m, features(m, kX), {"lrp", {}, {}, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_parameter);
    EXPECT_NE(std::string(e.what()).find("integrated_gradients"), std::string::npos);
  }
}

TEST(Registry, TextAttributionsLiveInEmbeddingSpace) {
  const auto m = io::build_text_classifier(DType::f64);
  const auto tokens = io::encode_tokens({"a", "great", "and", "moving", "film", "<pad>", "<pad>"});
  const auto x = features(m, {{"text", Tensor({7}, tokens)}});
  AttributionRequest req{"integrated_gradients", TargetSpec::class_index(1), {}, {}};
  req.params.steps = 256;
  const auto r = attribute(m, x, req);
  EXPECT_EQ(r.attributions.at("text").shape(), (Shape{7, 8}));
  EXPECT_LE(std::abs(*r.diagnostics.delta), 1e-3 * std::abs(*r.diagnostics.output_at_input -
                                                             *r.diagnostics.output_at_baseline) + 1e-6);
}

TEST(Registry, MultimodalBaselineAtInputZeroesThatModality) {
  const auto m = io::build_multimodal_classifier(DType::f64);
  const auto sample = io::demo_multimodal_samples(DType::f64).front();
  const auto x = features(m, sample.modalities);
  AttributionRequest req{"integrated_gradients", TargetSpec::class_index(0), {}, {}};
  req.baseline = BaselineSpec::of({{"features", sample.modalities.at("features")}});
  const auto r = attribute(m, x, req);
  for (double v : r.attributions.at("features").values()) EXPECT_EQ(v, 0.0);
}

}  // namespace
}  // namespace attrkit
