#pragma once

#include <string>
#include <vector>

#include "attrkit/attribution/types.hpp"
#include "attrkit/exec/chunked_map.hpp"

namespace attrkit {

// Layer attributions are keyed by the layer id and shaped like its output.

AttributionResult layer_activation(const Model& model, const Features& x, const std::string& layer_id);

AttributionResult layer_gradient_x_activation(const Model& model, const Features& x, const TargetSpec& target,
                                              const std::string& layer_id);

/// Integrated gradients with the layer output as the input space: gradients
/// at the midpoint interpolants of the model input, times y(x) - y(x0).
AttributionResult layer_integrated_gradients(const Model& model, const Features& x, const TargetSpec& target,
                                             const std::string& layer_id, const BaselineSpec& baseline,
                                             std::int64_t steps, const ExecPlan& plan = {});

/// Conductance of each neuron of the layer along the straight input path:
/// sum over k of dF/dy(x_k) * (y(x_{k+1}) - y(x_k)), x_k at alpha = k / steps.
AttributionResult layer_conductance(const Model& model, const Features& x, const TargetSpec& target,
                                    const std::string& layer_id, const BaselineSpec& baseline, std::int64_t steps,
                                    const ExecPlan& plan = {});

/// Conductance of a layer feeding, possibly through elementwise layers, the
/// final linear layer of a scalar-output model, next to that layer's weight
/// row. Both vectors are scaled to unit L1 norm.
struct LayerReport {
  std::string layer;
  std::vector<double> attribution;  // normalized conductance
  std::vector<double> weights;      // normalized final-layer weight row
  std::vector<double> conductance;  // raw
  double delta = 0.0;
};

LayerReport normalized_layer_report(const Model& model, const Features& x, const std::string& layer_id,
                                    const BaselineSpec& baseline, std::int64_t steps, const ExecPlan& plan = {});

// v / sum |v_i|. Throws DegenerateZeroVector when the norm is zero.
std::vector<double> l1_normalize(const std::vector<double>& v, const std::string& what);

}  // namespace attrkit
