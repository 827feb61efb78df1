#include <gtest/gtest.h>

#include <cmath>

#include "attrkit/attribution/primary.hpp"
#include "attrkit/attribution/registry.hpp"
#include "attrkit/engine/error.hpp"
#include "attrkit/engine/rng.hpp"
#include "attrkit/metrics/metrics.hpp"
#include "support.hpp"

namespace attrkit {
namespace {

using testing::features;
using testing::linear_model;
using testing::random_mlp;
using testing::naive_global_infidelity;
using testing::naive_local_infidelity;
using testing::naive_max_sensitivity;
using testing::random_vector;

const std::vector<double> kW{2.0, -1.0, 0.5, 3.0};
const std::vector<double> kX{0.3, -1.2, 2.0, 0.7};

AttributionResult saliency(const Model& m, const Features& x) {
  return backprop_attribution(BackpropKind::saliency, m, x, TargetSpec::scalar());
}

TEST(Streams, Defaults) {
  const auto m = linear_model(kW);
  const auto x = features(m, kX);
  const auto still = gaussian_perturbation(x, 0.0, 3, 0);
  for (double v : still[0]) EXPECT_EQ(v, 0.0);
  for (std::uint64_t j = 0; j < 50; ++j) {
    const auto y = linf_ball_sample(x, 0.03, 3, j).front();
    for (std::size_t i = 0; i < kX.size(); ++i) EXPECT_LE(std::abs(y[i] - kX[i]), 0.03 + 1e-15);
  }
  EXPECT_EQ(gaussian_perturbation(x, 0.03, 9, 4), gaussian_perturbation(x, 0.03, 9, 4));
  EXPECT_EQ(subset_mask(x, 0.5, 9, 4), subset_mask(x, 0.5, 9, 4));
  PerturbSpec defaults;
  EXPECT_EQ(defaults.stdev, 0.03);
  EXPECT_EQ(defaults.p, 0.5);
}

TEST(Infidelity, LocalSaliencyOnLinearModelIsZero) {
  const auto m = linear_model(kW, 0.4);
  const auto x = features(m, kX);
  PerturbSpec spec;
  spec.n_samples = 200;
  const auto r = infidelity(m, x, TargetSpec::scalar(), saliency(m, x).attributions, spec);
  EXPECT_LE(r.value, 1e-10);
  EXPECT_GE(r.value, 0.0);
}

TEST(Infidelity, GlobalIntegratedGradientsOnLinearModelIsZero) {
  const auto m = linear_model(kW, 0.4);
  const auto x = features(m, kX);
  const auto ig = integrated_gradients(m, x, TargetSpec::scalar(), BaselineSpec::zero(), 16);
  PerturbSpec spec;
  spec.kind = InfidelityKind::global;
  spec.n_samples = 200;
  EXPECT_LE(infidelity(m, x, TargetSpec::scalar(), ig.attributions, spec).value, 1e-10);
}

TEST(Infidelity, MatchesNaiveLoopBitExactly) {
  const auto m = random_mlp(21, 2, {6});
  const std::vector<double> xv{0.4, -0.7}, x0{0.1, 0.2};
  const auto x = features(m, xv);
  const auto phi = saliency(m, x);
  PerturbSpec spec;
  spec.n_samples = 1000;
  spec.seed = 1234;
  spec.batch_size = 37;
  EXPECT_EQ(infidelity(m, x, TargetSpec::scalar(), phi.attributions, spec).value,
            naive_local_infidelity(m, xv, phi.attributions.at("x").values(), 0.03, 1000, 1234));

  spec.kind = InfidelityKind::global;
  const auto ig = integrated_gradients(m, x, TargetSpec::scalar(), BaselineSpec::of({{"x", Tensor::vector(x0)}}), 32);
  EXPECT_EQ(infidelity(m, x, TargetSpec::scalar(), ig.attributions, spec, BaselineSpec::of({{"x", Tensor::vector(x0)}}))
                .value,
            naive_global_infidelity(m, xv, x0, ig.attributions.at("x").values(), 0.5, 1000, 1234));
}

TEST(Infidelity, BatchSizeAndWorkersDoNotChangeBits) {
  const auto m = random_mlp(22, 5, {7});
  const auto x = features(m, random_vector(23, 5));
  const auto phi = saliency(m, x).attributions;
  PerturbSpec spec;
  spec.n_samples = 100;
  spec.batch_size = 100;
  const double ref = infidelity(m, x, TargetSpec::scalar(), phi, spec, {}, 1).value;
  for (std::int64_t batch : {1, 4, 16}) {
    for (int workers : {1, 2, 4}) {
      spec.batch_size = batch;
      EXPECT_EQ(infidelity(m, x, TargetSpec::scalar(), phi, spec, {}, workers).value, ref);
    }
  }
}

TEST(Infidelity, GlobalNeedsAPerturbationSpace) {
  const auto m = linear_model(kW);
  const auto x = features(m, kX);
  PerturbSpec spec;
  spec.kind = InfidelityKind::global;
  try {
    infidelity(m, x, TargetSpec::scalar(), saliency(m, x).attributions, spec,
               BaselineSpec::of({{"x", Tensor::vector(kX)}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::zero_perturbation_space);
  }
}

TEST(MaxSensitivity, LinearSaliencyIsZero) {
  const auto m = linear_model(kW, 0.1);
  const auto r = max_sensitivity([&](const Features& f) { return saliency(m, f); }, features(m, kX), 0.03, 32, 5);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.flags.empty());
}

TEST(MaxSensitivity, VanishingRadiusGivesZero) {
  const auto m = random_mlp(24, 4, {6});
  const auto r = max_sensitivity([&](const Features& f) { return saliency(m, f); },
                                 features(m, random_vector(25, 4)), 1e-300, 16, 5);
  EXPECT_EQ(r.value, 0.0);
}

TEST(MaxSensitivity, MatchesNaiveLoopBitExactly) {
  const auto m = random_mlp(26, 3, {5});
  const auto xv = random_vector(27, 3);
  const auto r = max_sensitivity([&](const Features& f) { return saliency(m, f); }, features(m, xv), 0.2, 1000, 77, 2);
  EXPECT_EQ(r.value, naive_max_sensitivity(m, xv, 0.2, 1000, 77));
}

TEST(MaxSensitivity, MonotoneInSampleCount) {
  const auto m = random_mlp(28, 4, {8});
  const auto x = features(m, random_vector(29, 4));
  const auto fn = [&](const Features& f) { return saliency(m, f); };
  double prev = 0.0;
  for (std::int64_t n : {1, 4, 16, 64}) {
    const double v = max_sensitivity(fn, x, 0.5, n, 3).value;
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(MaxSensitivity, ZeroAttributionIsFlagged) {
  const auto m = linear_model({0.0, 0.0});
  const auto r = max_sensitivity([&](const Features& f) { return saliency(m, f); }, features(m, std::vector<double>{1.0, 1.0}), 0.03, 4, 1);
  ASSERT_EQ(r.flags.size(), 1u);
  EXPECT_EQ(r.flags.front(), kUnnormalizedSensitivity);
  EXPECT_EQ(r.value, 0.0);
}

TEST(MaxSensitivity, SmoothingHelpsNearAKink) {
  // Unit h0 = relu(x0 + x1 - 0.99) sits 0.01 above its kink at (0.5, 0.5).
  ModelSpec spec{"kink", {{"x", {2}, Modality::tabular}},
                 {{"fc0", LayerKind::linear, {"x"}, LinearParams{2, 2, true}}, {"relu0", LayerKind::relu, {"fc0"}, {}},
                  {"fc1", LayerKind::linear, {"relu0"}, LinearParams{2, 1, false}}},
                 "fc1", {}};
  const Model m(spec, {{"fc0.weight", Tensor({2, 2}, {1, 1, 1, -1})},
                       {"fc0.bias", Tensor({2}, {-0.99, 1.0})},
                       {"fc1.weight", Tensor({1, 2}, {2, 1})}});
  const auto x = features(m, std::vector<double>{0.5, 0.5});
  AttributionRequest plain{"saliency", TargetSpec::scalar(), {}, {}};
  AttributionRequest smooth = plain;
  smooth.params.nt_type = NoiseTunnelType::smoothgrad;
  smooth.params.nt_samples = 32;
  smooth.params.nt_stdev = 0.1;
  const double raw = max_sensitivity(make_attributor(m, plain), x, 0.03, 64, 8).value;
  const double smoothed = max_sensitivity(make_attributor(m, smooth), x, 0.03, 64, 8).value;
  EXPECT_GT(raw, 0.5);
  EXPECT_LE(smoothed, raw);
}

TEST(MaxSensitivity, RejectsNonPositiveRadius) {
  const auto m = linear_model(kW);
  EXPECT_THROW(max_sensitivity([&](const Features& f) { return saliency(m, f); }, features(m, kX), 0.0, 4, 1), Error);
}

}  // namespace
}  // namespace attrkit
