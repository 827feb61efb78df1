#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attrkit/attribution/types.hpp"
#include "attrkit/exec/chunked_map.hpp"

namespace attrkit {

enum class InfidelityKind { local, global };

std::string_view to_string(InfidelityKind k);
std::optional<InfidelityKind> parse_infidelity_kind(std::string_view s);

/// How infidelity perturbs the input. stdev is a standard deviation.
struct PerturbSpec {
  InfidelityKind kind = InfidelityKind::local;
  double stdev = 0.03;  // local: I ~ N(0, stdev^2) per coordinate
  double p = 0.5;       // global: each feature joins the subset with probability p
  std::int64_t n_samples = 10;
  std::uint64_t seed = 0;
  std::int64_t batch_size = 16;  // perturbed copies per forward batch

  void validate() const;
};

inline constexpr const char* kUnnormalizedSensitivity = "unnormalized-sensitivity";

struct MetricResult {
  std::string metric;
  double value = 0.0;
  std::int64_t n_samples = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> flags;
};

// Seeded perturbation streams. Sample j is drawn from Rng(seed, j), one
// value per feature coordinate, inputs in declaration order, row-major.
Point gaussian_perturbation(const Features& x, double stdev, std::uint64_t seed, std::uint64_t j);
Point subset_mask(const Features& x, double p, std::uint64_t seed, std::uint64_t j);  // 0 or 1
Point linf_ball_sample(const Features& x, double radius, std::uint64_t seed, std::uint64_t j);

/// Mean over samples of the squared gap between the attribution-predicted
/// and the actual output drop F(x) - F(x - I). Local: I is Gaussian and the
/// prediction is I . phi. Global: I = M * (x - x0) for a Bernoulli mask M
/// and the prediction is the sum of phi over the mask. Throws
/// ZeroPerturbationSpace for a global run with x == x0.
MetricResult infidelity(const Model& model, const Features& x, const TargetSpec& target, const TensorMap& phi,
                        const PerturbSpec& spec, const BaselineSpec& baseline = {}, int workers = 1);

/// Largest relative L2 change of the attribution over points drawn
/// uniformly from the L-infinity ball of `radius` around x. When the
/// attribution at x has norm below 1e-12 the raw change is returned and
/// the result carries kUnnormalizedSensitivity.
MetricResult max_sensitivity(const Attributor& attribute, const Features& x, double radius, std::int64_t n_samples,
                             std::uint64_t seed, int workers = 1);

}  // namespace attrkit
