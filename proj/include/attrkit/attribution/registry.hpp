#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attrkit/attribution/types.hpp"
#include "attrkit/exec/chunked_map.hpp"

namespace attrkit {

enum class ParamType { integer, number, string, object };

std::string_view to_string(ParamType t);

struct ParamInfo {
  std::string name;
  ParamType type = ParamType::number;
  bool required = false;
  std::optional<double> minimum;       // inclusive
  std::optional<double> exclusive_min;
  std::string default_value;           // rendered literal, empty when none
  std::vector<std::string> choices;    // allowed strings, when constrained
  std::string description;
};

struct MethodInfo {
  std::string id;
  std::string family;  // "gradient" or "perturbation"
  std::string scope;   // "primary", "layer" or "neuron"
  bool stochastic = false;
  std::vector<ParamInfo> params;
};

// Every method id `attribute` accepts, in a stable order. Every method also
// takes the optional "noise_tunnel" object parameter.
const std::vector<MethodInfo>& method_roster();
const MethodInfo* find_method(std::string_view id);
std::string roster_listing();  // comma-separated ids

/// Runs the requested method. A request carrying a noise tunnel type wraps
/// the method in noise_tunnel. Throws InvalidParameter for unknown ids or
/// missing method parameters.
AttributionResult attribute(const Model& model, const Features& x, const AttributionRequest& request,
                            const ExecPlan& plan = {});

// `attribute` with the request fixed, ready for noise tunnel or metrics.
Attributor make_attributor(const Model& model, AttributionRequest request, ExecPlan plan = {});

}  // namespace attrkit
