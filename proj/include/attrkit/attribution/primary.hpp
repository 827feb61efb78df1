#pragma once

#include <string>

#include "attrkit/attribution/types.hpp"
#include "attrkit/exec/chunked_map.hpp"

namespace attrkit {

// Every function here attributes the scalar selected by `target` (a model
// output or, for neuron attribution, a hidden neuron) to the features of
// `x`. Results are keyed by input name and have the feature shapes, except
// plain GradCAM which is keyed by the layer id.

enum class BackpropKind { saliency, input_x_gradient, guided_backprop, deconvolution };

AttributionResult backprop_attribution(BackpropKind kind, const Model& model, const Features& x,
                                       const TargetSpec& target);

/// Midpoint Riemann sum over alpha_k = (k - 0.5) / steps, k = 1..steps,
/// evaluated in chunks of at most plan.chunk_size interpolants.
AttributionResult integrated_gradients(const Model& model, const Features& x, const TargetSpec& target,
                                       const BaselineSpec& baseline, std::int64_t steps, const ExecPlan& plan = {});

/// Rescale-rule DeepLift. With shap_variant, averages over every member of a
/// distribution baseline, in order.
AttributionResult deeplift(const Model& model, const Features& x, const TargetSpec& target,
                           const BaselineSpec& baseline, bool shap_variant = false, std::uint64_t seed = 0,
                           const ExecPlan& plan = {});

/// Expected gradients. Sample j draws from Rng(seed, j): a baseline index,
/// alpha ~ U(0, 1), then one N(0, stdev^2) value per feature coordinate.
AttributionResult gradient_shap(const Model& model, const Features& x, const TargetSpec& target,
                                const BaselineSpec& baseline, std::int64_t n_samples, double stdev,
                                std::uint64_t seed, const ExecPlan& plan = {});

AttributionResult gradcam(const Model& model, const Features& x, const TargetSpec& target,
                          const std::string& layer_id, bool guided);

/// Groups sharing a mask id are replaced by the baseline together; every
/// member receives the full output difference. An empty mask for an input
/// makes each element its own group.
AttributionResult feature_ablation(const Model& model, const Features& x, const TargetSpec& target,
                                   const BaselineSpec& baseline, const TensorMap& masks = {},
                                   const ExecPlan& plan = {});

/// Sliding-window occlusion; elements covered by several windows get the
/// average of their differences. `windows` may use the key "*" for all inputs.
AttributionResult occlusion(const Model& model, const Features& x, const TargetSpec& target,
                            const BaselineSpec& baseline, const std::map<std::string, Window>& windows,
                            const ExecPlan& plan = {});

/// Sample j perturbs every coordinate of x with N(0, stdev^2) noise drawn
/// from Rng(seed, j) and runs `base`; statistics accumulate in sample order.
AttributionResult noise_tunnel(const Attributor& base, const Features& x, NoiseTunnelType type,
                               std::int64_t n_samples, double stdev, std::uint64_t seed);

// Bilinear resize of an H x W map (half-pixel centers, edges clamped).
std::vector<double> upsample_bilinear(const std::vector<double>& map, std::int64_t h, std::int64_t w,
                                      std::int64_t out_h, std::int64_t out_w);

}  // namespace attrkit
