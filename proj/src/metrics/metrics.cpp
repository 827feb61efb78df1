#include "attrkit/metrics/metrics.hpp"

#include <cmath>

#include "attrkit/engine/error.hpp"

namespace attrkit {

std::string_view to_string(InfidelityKind k) { return k == InfidelityKind::local ? "local" : "global"; }

std::optional<InfidelityKind> parse_infidelity_kind(std::string_view s) {
  if (s == "local") return InfidelityKind::local;
  if (s == "global") return InfidelityKind::global;
  return std::nullopt;
}

void PerturbSpec::validate() const {
  if (!(stdev >= 0.0)) throw Error(ErrorCode::invalid_parameter, "stdev must be >= 0");
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::invalid_parameter, "subset probability must lie in (0, 1)");
  if (n_samples < 1) throw Error(ErrorCode::insufficient_samples, "n_samples must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::invalid_parameter, "batch_size must be >= 1");
}

namespace {

template <typename Draw>
Point draw_point(const Features& x, std::uint64_t seed, std::uint64_t j, Draw draw) {
  Rng rng(seed, j);
  Point out(x.values.size());
  for (std::size_t f = 0; f < x.values.size(); ++f) {
    out[f].resize(x.values[f].size());
    for (std::size_t i = 0; i < x.values[f].size(); ++i) out[f][i] = draw(rng, x.values[f][i]);
  }
  return out;
}

}  // namespace

Point gaussian_perturbation(const Features& x, double stdev, std::uint64_t seed, std::uint64_t j) {
  return draw_point(x, seed, j, [stdev](Rng& rng, double) { return stdev * rng.normal(); });
}

Point subset_mask(const Features& x, double p, std::uint64_t seed, std::uint64_t j) {
  return draw_point(x, seed, j, [p](Rng& rng, double) { return rng.uniform() < p ? 1.0 : 0.0; });
}

Point linf_ball_sample(const Features& x, double radius, std::uint64_t seed, std::uint64_t j) {
  return draw_point(x, seed, j, [radius](Rng& rng, double v) { return v + radius * (2.0 * rng.uniform() - 1.0); });
}

MetricResult infidelity(const Model& model, const Features& x, const TargetSpec& target, const TensorMap& phi_map,
                        const PerturbSpec& spec, const BaselineSpec& baseline, int workers) {
  spec.validate();
  const auto objective = resolve_target(model, target);
  const Evaluator ev(model, x.points);
  const Point phi = x.from_map(phi_map);

  Point diff;
  if (spec.kind == InfidelityKind::global) {
    auto refs = resolve_baselines(baseline, x, model.dtype());
    if (refs.size() != 1) throw Error(ErrorCode::invalid_parameter, "global infidelity takes a single baseline");
    diff = subtract(x.values, refs.front());
    bool any = false;
    for (const auto& v : diff) {
      for (double d : v) any = any || d != 0.0;
    }
    if (!any) throw Error(ErrorCode::zero_perturbation_space, "input equals the baseline everywhere");
  }

  const double fx = ev.values(std::vector<Point>{x.values}, objective)[0];
  const auto n = static_cast<std::size_t>(spec.n_samples);
  const auto terms = chunked_map<double>(n, spec.batch_size, workers, [&](std::size_t begin, std::size_t end) {
    std::vector<Point> rows;
    std::vector<double> predicted;
    for (std::size_t j = begin; j < end; ++j) {
      Point pert;
      double dot = 0.0;
      if (spec.kind == InfidelityKind::local) {
        pert = gaussian_perturbation(x, spec.stdev, spec.seed, j);
        for (std::size_t f = 0; f < phi.size(); ++f) {
          for (std::size_t i = 0; i < phi[f].size(); ++i) dot += pert[f][i] * phi[f][i];
        }
      } else {
        pert = subset_mask(x, spec.p, spec.seed, j);
        for (std::size_t f = 0; f < phi.size(); ++f) {
          for (std::size_t i = 0; i < phi[f].size(); ++i) {
            if (pert[f][i] != 0.0) dot += phi[f][i];
            pert[f][i] *= diff[f][i];
          }
        }
      }
      rows.push_back(subtract(x.values, pert));
      predicted.push_back(dot);
    }
    auto fy = ev.values(rows, objective);
    for (std::size_t k = 0; k < fy.size(); ++k) {
      const double gap = predicted[k] - (fx - fy[k]);
      fy[k] = gap * gap;
    }
    return fy;
  });
  double sum = 0.0;
  for (double t : terms) sum += t;
  return {"infidelity", sum / static_cast<double>(n), spec.n_samples, spec.seed, {}};
}

namespace {

double l2_distance(const TensorMap& a, const TensorMap& b) {
  double s = 0.0;
  for (const auto& [name, ta] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.shape() != ta.shape()) {
      throw Error(ErrorCode::shape_mismatch, "attributions at the perturbed input differ in layout ('" + name + "')");
    }
    const auto va = ta.data();
    const auto vb = it->second.data();
    for (std::size_t i = 0; i < va.size(); ++i) s += (va[i] - vb[i]) * (va[i] - vb[i]);
  }
  return std::sqrt(s);
}

}  // namespace

MetricResult max_sensitivity(const Attributor& attribute, const Features& x, double radius, std::int64_t n_samples,
                             std::uint64_t seed, int workers) {
  if (!(radius > 0.0)) throw Error(ErrorCode::invalid_parameter, "radius must be > 0");
  if (n_samples < 1) throw Error(ErrorCode::insufficient_samples, "n_samples must be >= 1");
  const auto at_x = attribute(x).attributions;
  const double norm = l2_distance(at_x, [&] {
    TensorMap zeros;
    for (const auto& [name, t] : at_x) zeros.emplace(name, Tensor::zeros(t.shape(), t.dtype()));
    return zeros;
  }());

  const auto changes =
      chunked_map<double>(static_cast<std::size_t>(n_samples), 1, workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> out;
        for (std::size_t j = begin; j < end; ++j) {
          Features y{x.points, linf_ball_sample(x, radius, seed, j)};
          out.push_back(l2_distance(attribute(y).attributions, at_x));
        }
        return out;
      });
  double worst = 0.0;
  for (double c : changes) worst = std::max(worst, c);

  MetricResult r{"max_sensitivity", worst, n_samples, seed, {}};
  if (norm < 1e-12) {
    r.flags.emplace_back(kUnnormalizedSensitivity);
  } else {
    r.value = worst / norm;
  }
  return r;
}

}  // namespace attrkit
