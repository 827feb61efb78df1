#include "attrkit/attribution/primary.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "attrkit/engine/error.hpp"

namespace attrkit {

namespace {

void check_steps(std::int64_t steps) {
  if (steps < 1) throw Error(ErrorCode::invalid_steps, "steps must be >= 1, got " + std::to_string(steps));
}

Point zeros_like(const Point& p) {
  Point out(p.size());
  for (std::size_t f = 0; f < p.size(); ++f) out[f].assign(p[f].size(), 0.0);
  return out;
}

// mean += (v - mean) / k, so a constant stream reproduces its value exactly.
void running_mean(Point& mean, const Point& v, std::int64_t k) {
  const double inv = static_cast<double>(k);
  for (std::size_t f = 0; f < mean.size(); ++f) {
    for (std::size_t i = 0; i < mean[f].size(); ++i) mean[f][i] += (v[f][i] - mean[f][i]) / inv;
  }
}

Point hadamard(const Point& a, const Point& b) {
  Point out(a.size());
  for (std::size_t f = 0; f < a.size(); ++f) {
    out[f].resize(a[f].size());
    for (std::size_t i = 0; i < a[f].size(); ++i) out[f][i] = a[f][i] * b[f][i];
  }
  return out;
}

AttributionResult make_result(std::string method, const Features& x, const Point& values, DType dtype) {
  Features f{x.points, values};
  return {std::move(method), f.to_map(dtype), {}};
}

Point single_baseline(const BaselineSpec& spec, const Features& x, DType dtype, const char* method) {
  auto all = resolve_baselines(spec, x, dtype);
  if (all.size() != 1) {
    throw Error(ErrorCode::invalid_parameter, std::string(method) + " takes a single baseline, got a distribution of " +
                                                  std::to_string(all.size()));
  }
  return std::move(all.front());
}

std::span<const Point> rows_of(const std::vector<Point>& rows, std::size_t begin, std::size_t end) {
  return std::span<const Point>(rows).subspan(begin, end - begin);
}

}  // namespace

AttributionResult backprop_attribution(BackpropKind kind, const Model& model, const Features& x,
                                       const TargetSpec& target) {
  const auto objective = resolve_target(model, target);
  const Evaluator ev(model, x.points);
  GradOverride mode = GradOverride::none;
  std::string name = "saliency";
  switch (kind) {
    case BackpropKind::saliency: break;
    case BackpropKind::input_x_gradient: name = "input_x_gradient"; break;
    case BackpropKind::guided_backprop: name = "guided_backprop", mode = GradOverride::guided; break;
    case BackpropKind::deconvolution: name = "deconvolution", mode = GradOverride::deconv; break;
  }
  const std::vector<Point> rows{x.values};
  auto g = ev.gradients(rows, objective, mode);
  Point phi = kind == BackpropKind::input_x_gradient ? hadamard(g.features[0], x.values) : g.features[0];
  auto result = make_result(name, x, phi, model.dtype());
  result.diagnostics.output_at_input = g.values[0];
  return result;
}

AttributionResult integrated_gradients(const Model& model, const Features& x, const TargetSpec& target,
                                       const BaselineSpec& baseline, std::int64_t steps, const ExecPlan& plan) {
  check_steps(steps);
  plan.validate();
  const auto objective = resolve_target(model, target);
  const Evaluator ev(model, x.points);
  const Point x0 = single_baseline(baseline, x, model.dtype(), "integrated_gradients");

  const auto n = static_cast<std::size_t>(steps);
  const auto grads = chunked_map<Point>(n, plan.chunk_size, plan.workers, [&](std::size_t begin, std::size_t end) {
    std::vector<Point> rows;
    for (std::size_t k = begin; k < end; ++k) {
      const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
      rows.push_back(interpolate(x0, x.values, alpha));
    }
    return ev.gradients(rows, objective).features;
  });
  Point mean = zeros_like(x.values);
  for (std::size_t k = 0; k < n; ++k) running_mean(mean, grads[k], static_cast<std::int64_t>(k + 1));

  const Point phi = hadamard(mean, subtract(x.values, x0));
  const auto ends = ev.values(std::vector<Point>{x.values, x0}, objective);
  auto result = make_result("integrated_gradients", x, phi, model.dtype());
  result.diagnostics.output_at_input = ends[0];
  result.diagnostics.output_at_baseline = ends[1];
  result.diagnostics.delta = total(phi) - (ends[0] - ends[1]);
  result.diagnostics.samples = steps;
  return result;
}

AttributionResult deeplift(const Model& model, const Features& x, const TargetSpec& target,
                           const BaselineSpec& baseline, bool shap_variant, std::uint64_t seed, const ExecPlan& plan) {
  plan.validate();
  const auto objective = resolve_target(model, target);
  const Evaluator ev(model, x.points);
  auto refs = resolve_baselines(baseline, x, model.dtype());
  if (!shap_variant && refs.size() != 1) {
    throw Error(ErrorCode::invalid_parameter, "deeplift takes a single baseline; use deeplift_shap for a distribution");
  }
  // Member m pairs x with baseline m; every member is one row.
  const auto per_member =
      chunked_map<Point>(refs.size(), plan.chunk_size, plan.workers, [&](std::size_t begin, std::size_t end) {
        const std::vector<Point> rows(end - begin, x.values);
        auto g = ev.gradients(rows, objective, GradOverride::deeplift_rescale, rows_of(refs, begin, end));
        std::vector<Point> out;
        for (std::size_t m = begin; m < end; ++m) out.push_back(hadamard(g.features[m - begin], subtract(x.values, refs[m])));
        return out;
      });
  Point phi = zeros_like(x.values);
  for (std::size_t m = 0; m < per_member.size(); ++m) running_mean(phi, per_member[m], static_cast<std::int64_t>(m + 1));

  const auto fx = ev.values(std::vector<Point>{x.values}, objective)[0];
  const auto fb = ev.values(refs, objective);
  double mean_fb = 0.0;
  for (std::size_t m = 0; m < fb.size(); ++m) mean_fb += (fb[m] - mean_fb) / static_cast<double>(m + 1);

  auto result = make_result(shap_variant ? "deeplift_shap" : "deeplift", x, phi, model.dtype());
  result.diagnostics.output_at_input = fx;
  result.diagnostics.output_at_baseline = mean_fb;
  result.diagnostics.delta = total(phi) - (fx - mean_fb);
  result.diagnostics.samples = static_cast<std::int64_t>(refs.size());
  if (shap_variant) result.diagnostics.seed = seed;
  return result;
}

AttributionResult gradient_shap(const Model& model, const Features& x, const TargetSpec& target,
                                const BaselineSpec& baseline, std::int64_t n_samples, double stdev,
                                std::uint64_t seed, const ExecPlan& plan) {
  if (n_samples < 1) throw Error(ErrorCode::insufficient_samples, "n_samples must be >= 1");
  if (!(stdev >= 0.0)) throw Error(ErrorCode::invalid_parameter, "stdev must be >= 0");
  plan.validate();
  const auto objective = resolve_target(model, target);
  const Evaluator ev(model, x.points);
  const auto refs = resolve_baselines(baseline, x, model.dtype());

  struct Draw {
    std::size_t member;
    Point point;
  };
  const auto draw = [&](std::size_t j) {
    Rng rng(seed, j);
    Draw d{static_cast<std::size_t>(rng.below(refs.size())), {}};
    const double alpha = rng.uniform();
    const Point& b = refs[d.member];
    d.point.resize(x.values.size());
    for (std::size_t f = 0; f < x.values.size(); ++f) {
      d.point[f].resize(x.values[f].size());
      for (std::size_t i = 0; i < x.values[f].size(); ++i) {
        const double noisy = x.values[f][i] + rng.normal(0.0, stdev);
        d.point[f][i] = b[f][i] + alpha * (noisy - b[f][i]);
      }
    }
    return d;
  };

  const auto n = static_cast<std::size_t>(n_samples);
  const auto terms = chunked_map<Point>(n, plan.chunk_size, plan.workers, [&](std::size_t begin, std::size_t end) {
    std::vector<Draw> draws;
    std::vector<Point> rows;
    for (std::size_t j = begin; j < end; ++j) {
      draws.push_back(draw(j));
      rows.push_back(draws.back().point);
    }
    auto g = ev.gradients(rows, objective);
    std::vector<Point> out;
    for (std::size_t j = 0; j < draws.size(); ++j) {
      out.push_back(hadamard(g.features[j], subtract(x.values, refs[draws[j].member])));
    }
    return out;
  });
  Point phi = zeros_like(x.values);
  for (std::size_t j = 0; j < n; ++j) running_mean(phi, terms[j], static_cast<std::int64_t>(j + 1));

  const auto fx = ev.values(std::vector<Point>{x.values}, objective)[0];
  const auto fb = ev.values(refs, objective);
  double mean_fb = 0.0;
  for (std::size_t m = 0; m < fb.size(); ++m) mean_fb += (fb[m] - mean_fb) / static_cast<double>(m + 1);

  auto result = make_result("gradient_shap", x, phi, model.dtype());
  result.diagnostics.output_at_input = fx;
  result.diagnostics.output_at_baseline = mean_fb;
  result.diagnostics.delta = total(phi) - (fx - mean_fb);
  result.diagnostics.samples = n_samples;
  result.diagnostics.seed = seed;
  return result;
}

std::vector<double> upsample_bilinear(const std::vector<double>& map, std::int64_t h, std::int64_t w,
                                      std::int64_t out_h, std::int64_t out_w) {
  const auto source = [](std::int64_t dst, std::int64_t in, std::int64_t out) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    s = std::max(s, 0.0);
    auto i0 = std::min(static_cast<std::int64_t>(s), in - 1);
    auto i1 = std::min(i0 + 1, in - 1);
    return std::tuple{i0, i1, s - static_cast<double>(i0)};
  };
  std::vector<double> out(static_cast<std::size_t>(out_h * out_w));
  for (std::int64_t oy = 0; oy < out_h; ++oy) {
    const auto [y0, y1, ly] = source(oy, h, out_h);
    for (std::int64_t ox = 0; ox < out_w; ++ox) {
      const auto [x0, x1, lx] = source(ox, w, out_w);
      const auto at = [&](std::int64_t y, std::int64_t x) { return map[static_cast<std::size_t>(y * w + x)]; };
      const double top = at(y0, x0) * (1.0 - lx) + at(y0, x1) * lx;
      const double bottom = at(y1, x0) * (1.0 - lx) + at(y1, x1) * lx;
      out[static_cast<std::size_t>(oy * out_w + ox)] = top * (1.0 - ly) + bottom * ly;
    }
  }
  return out;
}

AttributionResult gradcam(const Model& model, const Features& x, const TargetSpec& target,
                          const std::string& layer_id, bool guided) {
  const auto objective = resolve_target(model, target);
  const int layer = model.index_of(layer_id);
  const Node& node = model.node(layer);
  if (node.kind != LayerKind::conv2d) {
    throw Error(ErrorCode::not_a_conv_layer, "'" + layer_id + "' is a " + std::string(to_string(node.kind)) + " layer");
  }
  const Evaluator ev(model, x.points);
  const std::vector<Point> rows{x.values};
  const auto g = ev.gradients(rows, objective, GradOverride::none, {}, layer);
  const auto C = node.shape[0], H = node.shape[1], W = node.shape[2];
  const auto& grad = g.layer[0];
  const auto& act = g.layer_out[0];

  std::vector<double> cam(static_cast<std::size_t>(H * W), 0.0);
  for (std::int64_t c = 0; c < C; ++c) {
    double weight = 0.0;
    for (std::int64_t i = 0; i < H * W; ++i) weight += grad[static_cast<std::size_t>(c * H * W + i)];
    weight /= static_cast<double>(H * W);
    for (std::int64_t i = 0; i < H * W; ++i) cam[static_cast<std::size_t>(i)] += weight * act[static_cast<std::size_t>(c * H * W + i)];
  }
  for (double& v : cam) v = std::max(v, 0.0);

  if (!guided) {
    AttributionResult result{"gradcam", {}, {}};
    result.attributions.emplace(layer_id, Tensor({H, W}, cam, model.dtype()));
    result.diagnostics.output_at_input = g.values[0];
    return result;
  }

  const auto gbp = ev.gradients(rows, objective, GradOverride::guided).features[0];
  Point phi(x.values.size());
  for (std::size_t f = 0; f < x.points.size(); ++f) {
    const auto& shape = x.points[f].shape;
    if (shape.size() != 3) {
      throw Error(ErrorCode::invalid_parameter, "guided_gradcam needs [C, H, W] inputs; '" + x.points[f].name +
                                                    "' is " + shape_string(shape));
    }
    const auto up = upsample_bilinear(cam, H, W, shape[1], shape[2]);
    const auto plane = static_cast<std::size_t>(shape[1] * shape[2]);
    phi[f].resize(gbp[f].size());
    for (std::size_t i = 0; i < gbp[f].size(); ++i) phi[f][i] = gbp[f][i] * up[i % plane];
  }
  auto result = make_result("guided_gradcam", x, phi, model.dtype());
  result.diagnostics.output_at_input = g.values[0];
  return result;
}

namespace {

// One perturbation: for each listed (feature, element) set the baseline value.
struct Perturbation {
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> members;
};

std::vector<double> evaluate_perturbations(const Evaluator& ev, const Objective& objective, const Features& x,
                                           const Point& x0, const std::vector<Perturbation>& perturbations,
                                           const ExecPlan& plan) {
  return chunked_map<double>(perturbations.size(), plan.perturbations_per_eval, plan.workers,
                             [&](std::size_t begin, std::size_t end) {
                               std::vector<Point> rows;
                               rows.reserve(end - begin);
                               for (std::size_t p = begin; p < end; ++p) {
                                 Point row = x.values;
                                 for (const auto& [f, elems] : perturbations[p].members) {
                                   for (auto i : elems) row[f][i] = x0[f][i];
                                 }
                                 rows.push_back(std::move(row));
                               }
                               return ev.values(rows, objective);
                             });
}

}  // namespace

AttributionResult feature_ablation(const Model& model, const Features& x, const TargetSpec& target,
                                   const BaselineSpec& baseline, const TensorMap& masks, const ExecPlan& plan) {
  plan.validate();
  const auto objective = resolve_target(model, target);
  const Evaluator ev(model, x.points);
  const Point x0 = single_baseline(baseline, x, model.dtype(), "feature_ablation");

  for (const auto& [name, mask] : masks) {
    const bool known = std::any_of(x.points.begin(), x.points.end(), [&](const auto& p) { return p.name == name; });
    if (!known) throw Error(ErrorCode::mask_shape_mismatch, "feature mask for unknown input '" + name + "'");
  }
  std::vector<Perturbation> groups;
  for (std::size_t f = 0; f < x.points.size(); ++f) {
    const auto& p = x.points[f];
    auto it = masks.find(p.name);
    if (it == masks.end()) {
      for (std::size_t i = 0; i < x.values[f].size(); ++i) groups.push_back({{{f, {i}}}});
      continue;
    }
    if (it->second.shape() != p.shape) {
      throw Error(ErrorCode::mask_shape_mismatch, "mask for '" + p.name + "' has shape " +
                                                      shape_string(it->second.shape()) + ", expected " +
                                                      shape_string(p.shape));
    }
    std::map<std::int64_t, std::vector<std::size_t>> by_id;
    const auto ids = it->second.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] != std::floor(ids[i]) || !std::isfinite(ids[i])) {
        throw Error(ErrorCode::mask_shape_mismatch, "mask for '" + p.name + "' holds a non-integer group id");
      }
      by_id[static_cast<std::int64_t>(ids[i])].push_back(i);
    }
    for (auto& [id, elems] : by_id) groups.push_back({{{f, std::move(elems)}}});
  }

  const auto fx = ev.values(std::vector<Point>{x.values}, objective)[0];
  const auto values = evaluate_perturbations(ev, objective, x, x0, groups, plan);
  Point phi = zeros_like(x.values);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (const auto& [f, elems] : groups[g].members) {
      for (auto i : elems) phi[f][i] = fx - values[g];
    }
  }
  auto result = make_result("feature_ablation", x, phi, model.dtype());
  result.diagnostics.output_at_input = fx;
  result.diagnostics.samples = static_cast<std::int64_t>(groups.size());
  return result;
}

AttributionResult occlusion(const Model& model, const Features& x, const TargetSpec& target,
                            const BaselineSpec& baseline, const std::map<std::string, Window>& windows,
                            const ExecPlan& plan) {
  plan.validate();
  const auto objective = resolve_target(model, target);
  const Evaluator ev(model, x.points);
  const Point x0 = single_baseline(baseline, x, model.dtype(), "occlusion");

  std::vector<Perturbation> patches;
  for (std::size_t f = 0; f < x.points.size(); ++f) {
    const auto& p = x.points[f];
    auto it = windows.find(p.name);
    if (it == windows.end()) it = windows.find("*");
    if (it == windows.end()) throw Error(ErrorCode::invalid_parameter, "no occlusion window for input '" + p.name + "'");
    const Window& win = it->second;
    const auto rank = p.shape.size();
    if (win.shape.size() != rank || win.strides.size() != rank) {
      throw Error(ErrorCode::invalid_parameter, "window for '" + p.name + "' must have rank " + std::to_string(rank));
    }
    Shape counts(rank);
    for (std::size_t d = 0; d < rank; ++d) {
      if (win.shape[d] < 1 || win.strides[d] < 1) {
        throw Error(ErrorCode::invalid_parameter, "window and stride sizes must be >= 1");
      }
      if (win.shape[d] > p.shape[d]) {
        throw Error(ErrorCode::window_too_large, "window " + shape_string(win.shape) + " exceeds input '" + p.name +
                                                     "' of shape " + shape_string(p.shape));
      }
      counts[d] = (p.shape[d] - win.shape[d]) / win.strides[d] + 1;
    }
    Shape strides(rank, 1);
    for (std::size_t d = rank; d-- > 1;) strides[d - 1] = strides[d] * p.shape[d];

    // Row-major over window positions, then row-major within the window.
    Shape pos(rank, 0);
    for (std::int64_t w = 0; w < shape_size(counts); ++w) {
      std::vector<std::size_t> elems;
      Shape off(rank, 0);
      for (std::int64_t e = 0; e < shape_size(win.shape); ++e) {
        std::int64_t flat = 0;
        for (std::size_t d = 0; d < rank; ++d) flat += (pos[d] * win.strides[d] + off[d]) * strides[d];
        elems.push_back(static_cast<std::size_t>(flat));
        for (std::size_t d = rank; d-- > 0;) {
          if (++off[d] < win.shape[d]) break;
          off[d] = 0;
        }
      }
      patches.push_back({{{f, std::move(elems)}}});
      for (std::size_t d = rank; d-- > 0;) {
        if (++pos[d] < counts[d]) break;
        pos[d] = 0;
      }
    }
  }

  const auto fx = ev.values(std::vector<Point>{x.values}, objective)[0];
  const auto values = evaluate_perturbations(ev, objective, x, x0, patches, plan);
  Point sums = zeros_like(x.values);
  Point counts = zeros_like(x.values);
  for (std::size_t w = 0; w < patches.size(); ++w) {
    for (const auto& [f, elems] : patches[w].members) {
      for (auto i : elems) {
        sums[f][i] += fx - values[w];
        counts[f][i] += 1.0;
      }
    }
  }
  for (std::size_t f = 0; f < sums.size(); ++f) {
    for (std::size_t i = 0; i < sums[f].size(); ++i) {
      if (counts[f][i] > 0.0) sums[f][i] /= counts[f][i];
    }
  }
  auto result = make_result("occlusion", x, sums, model.dtype());
  result.diagnostics.output_at_input = fx;
  result.diagnostics.samples = static_cast<std::int64_t>(patches.size());
  return result;
}

AttributionResult noise_tunnel(const Attributor& base, const Features& x, NoiseTunnelType type,
                               std::int64_t n_samples, double stdev, std::uint64_t seed) {
  const std::int64_t needed = type == NoiseTunnelType::vargrad ? 2 : 1;
  if (n_samples < needed) {
    throw Error(ErrorCode::insufficient_samples, std::string(to_string(type)) + " needs at least " +
                                                     std::to_string(needed) + " samples, got " +
                                                     std::to_string(n_samples));
  }
  if (!(stdev >= 0.0)) throw Error(ErrorCode::invalid_parameter, "noise stdev must be >= 0");

  std::string method;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> stats;  // mean, M2
  std::map<std::string, std::pair<Shape, DType>> layout;
  for (std::int64_t j = 0; j < n_samples; ++j) {
    Rng rng(seed, static_cast<std::uint64_t>(j));
    Features noisy = x;
    for (auto& v : noisy.values) {
      for (double& e : v) e += rng.normal(0.0, stdev);
    }
    const auto r = base(noisy);
    method = r.method;
    const double k = static_cast<double>(j + 1);
    for (const auto& [name, t] : r.attributions) {
      auto& [mean, m2] = stats[name];
      if (j == 0) {
        mean.assign(t.size(), 0.0);
        m2.assign(t.size(), 0.0);
        layout[name] = {t.shape(), t.dtype()};
      }
      const auto v = t.data();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double e = type == NoiseTunnelType::smoothgrad_sq ? v[i] * v[i] : v[i];
        const double d = e - mean[i];
        mean[i] += d / k;
        m2[i] += d * (e - mean[i]);
      }
    }
  }

  AttributionResult out{method + "+" + std::string(to_string(type)), {}, {}};
  for (auto& [name, st] : stats) {
    auto values = type == NoiseTunnelType::vargrad ? st.second : st.first;
    if (type == NoiseTunnelType::vargrad) {
      for (double& v : values) v /= static_cast<double>(n_samples);
    }
    out.attributions.emplace(name, Tensor(layout[name].first, std::move(values), layout[name].second));
  }
  out.diagnostics.samples = n_samples;
  out.diagnostics.seed = seed;
  return out;
}

}  // namespace attrkit
