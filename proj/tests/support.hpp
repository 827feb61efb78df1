#pragma once

#include <string>
#include <vector>

#include "attrkit/attribution/registry.hpp"
#include "attrkit/engine/model.hpp"

namespace attrkit::testing {

// x[n] -> fc -> scalar, f64.
Model linear_model(const std::vector<double>& w, double b = 0.0, bool with_bias = true);

// x[in] -> fc0 -> relu0 -> ... -> fc<k> with out outputs, f64 seeded weights.
Model random_mlp(std::uint64_t seed, std::int64_t in, const std::vector<std::int64_t>& hidden,
                 std::int64_t out = 1);

Model single_layer(LayerDecl layer, const Shape& input_shape, const WeightStore& weights,
                   Modality modality = Modality::tabular);

Features features(const Model& model, const std::vector<double>& x);
Features features(const Model& model, const TensorMap& inputs);
std::vector<double> random_vector(std::uint64_t seed, std::size_t n, double lo = -1.0, double hi = 1.0);

const std::vector<double>& only(const AttributionResult& r);

// Unbatched Monte Carlo loops written straight from the metric definitions,
// for a model with one input "x" and a scalar output. Sample j draws from Rng(seed, j).
double naive_local_infidelity(const Model& m, const std::vector<double>& x, const std::vector<double>& phi,
                              double stdev, int n, std::uint64_t seed);
double naive_global_infidelity(const Model& m, const std::vector<double>& x, const std::vector<double>& x0,
                               const std::vector<double>& phi, double p, int n, std::uint64_t seed);
// Saliency max-sensitivity over the L-infinity ball.
double naive_max_sensitivity(const Model& m, const std::vector<double>& x, double radius, int n,
                             std::uint64_t seed);

}  // namespace attrkit::testing
