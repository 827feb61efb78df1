#include "attrkit/attribution/types.hpp"

#include "attrkit/engine/error.hpp"

namespace attrkit {

namespace {

Tensor pick(const TensorMap& m, const std::string& input, const Tensor& like) {
  auto it = m.find(input);
  if (it == m.end()) return Tensor::zeros(like.shape(), like.dtype());
  if (it->second.shape() != like.shape()) {
    throw Error(ErrorCode::shape_mismatch, "baseline for '" + input + "' has shape " + shape_string(it->second.shape()) +
                                               ", input has " + shape_string(like.shape()));
  }
  return it->second.as(like.dtype());
}

}  // namespace

std::vector<Tensor> resolve_baseline(const BaselineSpec& spec, const std::string& input, const Tensor& like) {
  switch (spec.kind) {
    case BaselineSpec::Kind::zero: return {Tensor::zeros(like.shape(), like.dtype())};
    case BaselineSpec::Kind::fill: return {Tensor::full(like.shape(), spec.fill, like.dtype())};
    case BaselineSpec::Kind::tensor: return {pick(spec.tensor, input, like)};
    case BaselineSpec::Kind::distribution: {
      if (spec.distribution.empty()) throw Error(ErrorCode::empty_baseline_distribution, "no baselines given");
      std::vector<Tensor> out;
      for (const auto& member : spec.distribution) out.push_back(pick(member, input, like));
      return out;
    }
  }
  return {};
}

Tensor draw_baseline(const BaselineSpec& spec, const std::string& input, const Tensor& like, Rng& rng) {
  auto all = resolve_baseline(spec, input, like);
  return all.at(static_cast<std::size_t>(rng.below(all.size())));
}

std::vector<Point> resolve_baselines(const BaselineSpec& spec, const Features& x, DType dtype) {
  std::vector<Point> out;
  for (std::size_t f = 0; f < x.points.size(); ++f) {
    const Tensor like(x.points[f].shape, x.values[f]);
    const auto members = resolve_baseline(spec, x.points[f].name, like);
    if (out.empty()) out.resize(members.size(), Point(x.points.size()));
    for (std::size_t m = 0; m < members.size(); ++m) {
      out[m][f] = members[m].values();
      round_to(out[m][f], dtype);
    }
  }
  return out;
}

std::string_view to_string(NoiseTunnelType t) {
  switch (t) {
    case NoiseTunnelType::smoothgrad: return "smoothgrad";
    case NoiseTunnelType::smoothgrad_sq: return "smoothgrad_sq";
    case NoiseTunnelType::vargrad: return "vargrad";
  }
  return "smoothgrad";
}

std::optional<NoiseTunnelType> parse_noise_tunnel_type(std::string_view s) {
  for (auto t : {NoiseTunnelType::smoothgrad, NoiseTunnelType::smoothgrad_sq, NoiseTunnelType::vargrad}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

double total(const AttributionResult& r) {
  double s = 0.0;
  for (const auto& [name, t] : r.attributions) s += sum(t);
  return s;
}

}  // namespace attrkit
