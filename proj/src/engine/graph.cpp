#include "attrkit/engine/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <type_traits>

#include "attrkit/engine/error.hpp"

namespace attrkit {

namespace {

using Buffer = std::vector<double>;

std::size_t usize(std::int64_t v) { return static_cast<std::size_t>(v); }

std::int64_t item_size(const Node& node) { return shape_size(node.shape); }

// Output positions o with 0 <= o*stride - pad + k < extent, as [lo, hi).
std::pair<std::int64_t, std::int64_t> valid_range(std::int64_t out_extent, std::int64_t in_extent,
                                                  std::int64_t stride, std::int64_t pad, std::int64_t k) {
  std::int64_t lo = 0;
  while (lo < out_extent && lo * stride - pad + k < 0) ++lo;
  std::int64_t hi = out_extent;
  while (hi > lo && (hi - 1) * stride - pad + k >= in_extent) --hi;
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// forward kernels

Buffer linear_forward(const Node& node, const Buffer& x, std::int64_t batch) {
  const auto& p = std::get<LinearParams>(node.params);
  const auto in = p.in_features;
  const auto out = p.out_features;
  Buffer xt(usize(in * batch));
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t i = 0; i < in; ++i) xt[usize(i * batch + b)] = x[usize(b * in + i)];
  }
  const auto w = node.weight.data();
  Buffer y(usize(batch * out));
  Buffer acc(usize(batch));
  for (std::int64_t o = 0; o < out; ++o) {
    std::fill(acc.begin(), acc.end(), node.has_bias ? node.bias[usize(o)] : 0.0);
    const double* row = w.data() + o * in;
    for (std::int64_t i = 0; i < in; ++i) {
      const double wi = row[i];
      const double* col = xt.data() + i * batch;
      for (std::int64_t b = 0; b < batch; ++b) acc[usize(b)] += wi * col[b];
    }
    for (std::int64_t b = 0; b < batch; ++b) y[usize(b * out + o)] = acc[usize(b)];
  }
  return y;
}

constexpr std::int64_t kConvLanes = 8;

// R output channels by kConvLanes columns, bias first and then taps in order.
// acc[r][i] += w[r * taps + t] * src[offsets[t] + i] for t ascending. The
// clones differ only in vector width; without contraction they agree bitwise.
using Lanes = double __attribute__((vector_size(4 * sizeof(double))));
static_assert(kConvLanes == 2 * 4);

template <int R>
[[gnu::always_inline]] inline void accumulate_taps(const double* w, const double* src, const std::int64_t* offsets,
                                                   std::int64_t taps, double* acc) {
  Lanes a[R][2];
  std::memcpy(a, acc, sizeof a);
  for (std::int64_t t = 0; t < taps; ++t) {
    Lanes lo, hi;
    std::memcpy(&lo, src + offsets[t], sizeof lo);
    std::memcpy(&hi, src + offsets[t] + 4, sizeof hi);
    for (int r = 0; r < R; ++r) {
      const double wv = w[r * taps + t];
      const Lanes wl = {wv, wv, wv, wv};
      a[r][0] += wl * lo;
      a[r][1] += wl * hi;
    }
  }
  std::memcpy(acc, a, sizeof a);
}

[[gnu::target_clones("avx2", "default")]] void accumulate_taps4(const double* w, const double* src,
                                                                  const std::int64_t* offsets, std::int64_t taps,
                                                                  double* acc) {
  accumulate_taps<4>(w, src, offsets, taps, acc);
}

// One block of kConvLanes outputs for channels k0..k0+R, bias first and then
// taps in order; out[r * out_pitch + i] receives the sums.
template <int R>
void conv_block(const Node& node, const double* w, const double* src, const std::int64_t* offsets,
                std::int64_t taps, std::int64_t k0, double* out, std::int64_t out_pitch) {
  double acc[R * kConvLanes];
  for (int r = 0; r < R; ++r) {
    const double b = node.has_bias ? node.bias[usize(k0 + r)] : 0.0;
    std::fill(acc + r * kConvLanes, acc + (r + 1) * kConvLanes, b);
  }
  if constexpr (R == 4) {
    accumulate_taps4(w + k0 * taps, src, offsets, taps, acc);
  } else {
    accumulate_taps<R>(w + k0 * taps, src, offsets, taps, acc);
  }
  for (int r = 0; r < R; ++r) std::memcpy(out + r * out_pitch, acc + r * kConvLanes, sizeof(double) * kConvLanes);
}

template <typename Block>
void for_channel_blocks(std::int64_t K, Block&& block) {
  std::int64_t k = 0;
  for (; k + 4 <= K; k += 4) block(std::integral_constant<int, 4>{}, k);
  for (; k < K; ++k) block(std::integral_constant<int, 1>{}, k);
}

// Padding taps read zeros, so each output sums bias and then every tap in
// (channel, row, column) order whatever the batch size or code path.
Buffer conv2d_forward(const Node& node, const Node& src, const Buffer& x, std::int64_t batch) {
  const auto& p = std::get<Conv2dParams>(node.params);
  const auto C = src.shape[0], H = src.shape[1], W = src.shape[2];
  const auto K = node.shape[0], OH = node.shape[1], OW = node.shape[2];
  const auto P = OH * OW;
  const auto taps = C * p.kernel_h * p.kernel_w;
  const auto w = node.weight.data();
  Buffer y(usize(batch * K * P));
  std::vector<std::int64_t> offsets(usize(taps));

  if (p.stride == 1 && OW % kConvLanes == 0) {
    // Direct from a zero-padded copy of the input.
    const auto Hp = H + 2 * p.padding, Wp = W + 2 * p.padding;
    Buffer xp(usize(batch * C * Hp * Wp), 0.0);
    for (std::int64_t bc = 0; bc < batch * C; ++bc) {
      for (std::int64_t h = 0; h < H; ++h) {
        const double* from = x.data() + (bc * H + h) * W;
        double* to = xp.data() + (bc * Hp + h + p.padding) * Wp + p.padding;
        for (std::int64_t i = 0; i < W; ++i) to[i] = from[i];
      }
    }
    for (std::int64_t c = 0, t = 0; c < C; ++c) {
      for (std::int64_t kh = 0; kh < p.kernel_h; ++kh) {
        for (std::int64_t kw = 0; kw < p.kernel_w; ++kw) offsets[usize(t++)] = (c * Hp + kh) * Wp + kw;
      }
    }
    for (std::int64_t b = 0; b < batch; ++b) {
      for (std::int64_t oh = 0; oh < OH; ++oh) {
        for (std::int64_t ow = 0; ow < OW; ow += kConvLanes) {
          const double* at = xp.data() + (b * C * Hp + oh) * Wp + ow;
          double* out = y.data() + b * K * P + oh * OW + ow;
          for_channel_blocks(K, [&](auto rows, std::int64_t k) {
            conv_block<decltype(rows)::value>(node, w.data(), at, offsets.data(), taps, k, out + k * P, P);
          });
        }
      }
    }
    return y;
  }

  // Otherwise unfold into columns, one row per tap, zero in the padding.
  const auto N = batch * P;
  const auto pitch = (N + kConvLanes - 1) / kConvLanes * kConvLanes;
  Buffer cols(usize(taps * pitch), 0.0);
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t kh = 0; kh < p.kernel_h; ++kh) {
      const auto [oh_lo, oh_hi] = valid_range(OH, H, p.stride, p.padding, kh);
      for (std::int64_t kw = 0; kw < p.kernel_w; ++kw) {
        const auto [ow_lo, ow_hi] = valid_range(OW, W, p.stride, p.padding, kw);
        const auto t = (c * p.kernel_h + kh) * p.kernel_w + kw;
        offsets[usize(t)] = t * pitch;
        double* row = cols.data() + t * pitch;
        for (std::int64_t b = 0; b < batch; ++b) {
          const double* in = x.data() + (b * C + c) * H * W;
          for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
            const double* in_row = in + (oh * p.stride - p.padding + kh) * W - p.padding + kw;
            double* out_row = row + b * P + oh * OW;
            for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) out_row[ow] = in_row[ow * p.stride];
          }
        }
      }
    }
  }
  Buffer sums(usize(K * pitch));
  for (std::int64_t n0 = 0; n0 < pitch; n0 += kConvLanes) {
    for_channel_blocks(K, [&](auto rows, std::int64_t k) {
      conv_block<decltype(rows)::value>(node, w.data(), cols.data() + n0, offsets.data(), taps, k,
                                        sums.data() + k * pitch + n0, pitch);
    });
  }
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t k = 0; k < K; ++k) {
      const double* from = sums.data() + k * pitch + b * P;
      std::copy(from, from + P, y.data() + (b * K + k) * P);
    }
  }
  return y;
}

// Flat index (within the source item) of the window maximum; ties resolve to
// the first element in row-major window order.
template <typename Fn>
void for_each_pool_window(const Node& node, const Node& src, std::int64_t batch, Fn&& fn) {
  const auto& p = std::get<MaxPool2dParams>(node.params);
  const auto C = src.shape[0], H = src.shape[1], W = src.shape[2];
  const auto OH = node.shape[1], OW = node.shape[2];
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t oh = 0; oh < OH; ++oh) {
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          const std::int64_t in_base = (b * C + c) * H * W;
          const std::int64_t out_index = ((b * C + c) * OH + oh) * OW + ow;
          fn(in_base, oh * p.stride, ow * p.stride, p.kernel, W, out_index);
        }
      }
    }
  }
}

std::int64_t window_argmax(const Buffer& x, std::int64_t base, std::int64_t h0, std::int64_t w0, std::int64_t k,
                           std::int64_t W) {
  std::int64_t best = base + h0 * W + w0;
  for (std::int64_t i = 0; i < k; ++i) {
    for (std::int64_t j = 0; j < k; ++j) {
      const std::int64_t at = base + (h0 + i) * W + (w0 + j);
      if (x[usize(at)] > x[usize(best)]) best = at;
    }
  }
  return best;
}

Buffer maxpool_forward(const Node& node, const Node& src, const Buffer& x, std::int64_t batch) {
  Buffer y(usize(batch * item_size(node)));
  for_each_pool_window(node, src, batch, [&](std::int64_t base, std::int64_t h0, std::int64_t w0, std::int64_t k,
                                             std::int64_t W, std::int64_t out) {
    y[usize(out)] = x[usize(window_argmax(x, base, h0, w0, k, W))];
  });
  return y;
}

Buffer embedding_forward(const Node& node, const Buffer& ids, std::int64_t batch) {
  const auto& p = std::get<EmbeddingParams>(node.params);
  const auto T = node.shape[0];
  const auto table = node.weight.data();
  Buffer y(usize(batch * T * p.dim));
  for (std::int64_t r = 0; r < batch * T; ++r) {
    const double id = ids[usize(r)];
    if (!(id >= 0.0) || id >= static_cast<double>(p.num_embeddings) || id != std::floor(id)) {
      throw Error(ErrorCode::invalid_parameter,
                  "layer '" + node.id + "': token id " + std::to_string(id) + " outside the vocabulary");
    }
    const auto row = static_cast<std::int64_t>(id);
    std::copy_n(table.data() + row * p.dim, p.dim, y.data() + r * p.dim);
  }
  return y;
}

struct AxisSplit {
  std::int64_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::int64_t axis) {
  AxisSplit s;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(shape.size()); ++i) {
    if (i < axis) s.outer *= shape[usize(i)];
    else if (i == axis) s.n = shape[usize(i)];
    else s.inner *= shape[usize(i)];
  }
  return s;
}

Buffer mean_forward(const Node& node, const Node& src, const Buffer& x, std::int64_t batch) {
  const auto s = split_axis(src.shape, std::get<MeanParams>(node.params).axis);
  Buffer y(usize(batch * s.outer * s.inner), 0.0);
  for (std::int64_t bo = 0; bo < batch * s.outer; ++bo) {
    double* out = y.data() + bo * s.inner;
    for (std::int64_t j = 0; j < s.n; ++j) {
      const double* in = x.data() + (bo * s.n + j) * s.inner;
      for (std::int64_t i = 0; i < s.inner; ++i) out[i] += in[i];
    }
    for (std::int64_t i = 0; i < s.inner; ++i) out[i] /= static_cast<double>(s.n);
  }
  return y;
}

Buffer concat_forward(const Model& model, const Node& node, const Activations& acts, std::int64_t batch) {
  const auto total = item_size(node);
  Buffer y(usize(batch * total));
  std::int64_t offset = 0;
  for (int src : node.sources) {
    const auto n = item_size(model.node(src));
    const auto& x = acts.at(src);
    for (std::int64_t b = 0; b < batch; ++b) std::copy_n(x.data() + b * n, n, y.data() + b * total + offset);
    offset += n;
  }
  return y;
}

Buffer forward_node(const Model& model, const Node& node, const Activations& acts, std::int64_t batch) {
  const auto& x = acts.at(node.sources.at(0));
  const Node& src = model.node(node.sources.at(0));
  switch (node.kind) {
    case LayerKind::linear: return linear_forward(node, x, batch);
    case LayerKind::conv2d: return conv2d_forward(node, src, x, batch);
    case LayerKind::maxpool2d: return maxpool_forward(node, src, x, batch);
    case LayerKind::relu: {
      Buffer y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      return y;
    }
    case LayerKind::flatten: return x;
    case LayerKind::embedding: return embedding_forward(node, x, batch);
    case LayerKind::mean: return mean_forward(node, src, x, batch);
    case LayerKind::concat: return concat_forward(model, node, acts, batch);
    case LayerKind::input: break;
  }
  throw Error(ErrorCode::unsupported_layer, "cannot evaluate '" + node.id + "'");
}

// ---------------------------------------------------------------------------
// backward kernels

void add_into(Buffer& dst, const Buffer& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Buffer linear_backward(const Node& node, const Buffer& g, std::int64_t batch) {
  const auto& p = std::get<LinearParams>(node.params);
  const auto in = p.in_features;
  const auto out = p.out_features;
  const auto w = node.weight.data();
  Buffer gt(usize(in * batch), 0.0);
  Buffer gcol(usize(batch));
  for (std::int64_t o = 0; o < out; ++o) {
    for (std::int64_t b = 0; b < batch; ++b) gcol[usize(b)] = g[usize(b * out + o)];
    const double* row = w.data() + o * in;
    for (std::int64_t i = 0; i < in; ++i) {
      const double wi = row[i];
      double* dst = gt.data() + i * batch;
      for (std::int64_t b = 0; b < batch; ++b) dst[b] += wi * gcol[usize(b)];
    }
  }
  Buffer gx(usize(batch * in));
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t i = 0; i < in; ++i) gx[usize(b * in + i)] = gt[usize(i * batch + b)];
  }
  return gx;
}

void linear_parameter_grads(const Node& node, const Buffer& x, const Buffer& g, std::int64_t batch,
                            std::map<std::string, Buffer>& out) {
  const auto& p = std::get<LinearParams>(node.params);
  Buffer gw(usize(p.out_features * p.in_features), 0.0);
  Buffer gb(usize(p.out_features), 0.0);
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t o = 0; o < p.out_features; ++o) {
      const double go = g[usize(b * p.out_features + o)];
      gb[usize(o)] += go;
      for (std::int64_t i = 0; i < p.in_features; ++i) {
        gw[usize(o * p.in_features + i)] += go * x[usize(b * p.in_features + i)];
      }
    }
  }
  add_into(out[weight_name(node.id)], gw);
  if (node.has_bias) add_into(out[bias_name(node.id)], gb);
}

Buffer conv2d_backward(const Node& node, const Node& src, const Buffer& g, std::int64_t batch) {
  const auto& p = std::get<Conv2dParams>(node.params);
  const auto C = src.shape[0], H = src.shape[1], W = src.shape[2];
  const auto K = node.shape[0], OH = node.shape[1], OW = node.shape[2];
  const auto w = node.weight.data();
  Buffer gx(usize(batch * C * H * W), 0.0);
  for (std::int64_t k = 0; k < K; ++k) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t kh = 0; kh < p.kernel_h; ++kh) {
        const auto [oh_lo, oh_hi] = valid_range(OH, H, p.stride, p.padding, kh);
        for (std::int64_t kw = 0; kw < p.kernel_w; ++kw) {
          const auto [ow_lo, ow_hi] = valid_range(OW, W, p.stride, p.padding, kw);
          const double wv = w[usize(((k * C + c) * p.kernel_h + kh) * p.kernel_w + kw)];
          for (std::int64_t b = 0; b < batch; ++b) {
            double* dst = gx.data() + (b * C + c) * H * W;
            const double* go = g.data() + (b * K + k) * OH * OW;
            for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
              const std::int64_t dst_row = (oh * p.stride - p.padding + kh) * W - p.padding + kw;
              const double* go_row = go + oh * OW;
              for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) dst[dst_row + ow * p.stride] += wv * go_row[ow];
            }
          }
        }
      }
    }
  }
  return gx;
}

void conv2d_parameter_grads(const Node& node, const Node& src, const Buffer& x, const Buffer& g, std::int64_t batch,
                            std::map<std::string, Buffer>& out) {
  const auto& p = std::get<Conv2dParams>(node.params);
  const auto C = src.shape[0], H = src.shape[1], W = src.shape[2];
  const auto K = node.shape[0], OH = node.shape[1], OW = node.shape[2];
  Buffer gw(usize(K * C * p.kernel_h * p.kernel_w), 0.0);
  Buffer gb(usize(K), 0.0);
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t k = 0; k < K; ++k) {
      const double* go = g.data() + (b * K + k) * OH * OW;
      for (std::int64_t i = 0; i < OH * OW; ++i) gb[usize(k)] += go[i];
      for (std::int64_t c = 0; c < C; ++c) {
        const double* in = x.data() + (b * C + c) * H * W;
        for (std::int64_t kh = 0; kh < p.kernel_h; ++kh) {
          const auto [oh_lo, oh_hi] = valid_range(OH, H, p.stride, p.padding, kh);
          for (std::int64_t kw = 0; kw < p.kernel_w; ++kw) {
            const auto [ow_lo, ow_hi] = valid_range(OW, W, p.stride, p.padding, kw);
            double acc = 0.0;
            for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
              for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                acc += go[oh * OW + ow] * in[(oh * p.stride - p.padding + kh) * W + ow * p.stride - p.padding + kw];
              }
            }
            gw[usize(((k * C + c) * p.kernel_h + kh) * p.kernel_w + kw)] += acc;
          }
        }
      }
    }
  }
  add_into(out[weight_name(node.id)], gw);
  if (node.has_bias) add_into(out[bias_name(node.id)], gb);
}

double rescale_multiplier(double delta_out, double delta_in, double local_gradient) {
  return std::abs(delta_in) > kDeepLiftEpsilon ? delta_out / delta_in : local_gradient;
}

Buffer relu_backward(const Buffer& x, const Buffer& g, const BackwardOptions& options, const Buffer* x_ref) {
  Buffer gx(g.size());
  switch (options.mode) {
    case GradOverride::none:
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] = x[i] > 0.0 ? g[i] : 0.0;
      break;
    case GradOverride::guided:
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] = (x[i] > 0.0 && g[i] > 0.0) ? g[i] : 0.0;
      break;
    case GradOverride::deconv:
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] > 0.0 ? g[i] : 0.0;
      break;
    case GradOverride::deeplift_rescale:
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double xi = x[i];
        const double ri = (*x_ref)[i];
        const double dy = (xi > 0.0 ? xi : 0.0) - (ri > 0.0 ? ri : 0.0);
        gx[i] = g[i] * rescale_multiplier(dy, xi - ri, xi > 0.0 ? 1.0 : 0.0);
      }
      break;
  }
  return gx;
}

Buffer maxpool_backward(const Node& node, const Node& src, const Buffer& x, const Buffer& g, std::int64_t batch,
                        const BackwardOptions& options, const Buffer* x_ref) {
  Buffer gx(usize(batch * item_size(src)), 0.0);
  const bool rescale = options.mode == GradOverride::deeplift_rescale;
  for_each_pool_window(node, src, batch, [&](std::int64_t base, std::int64_t h0, std::int64_t w0, std::int64_t k,
                                             std::int64_t W, std::int64_t out) {
    const auto at = window_argmax(x, base, h0, w0, k, W);
    double m = 1.0;
    if (rescale) {
      const double y_ref = (*x_ref)[usize(window_argmax(*x_ref, base, h0, w0, k, W))];
      m = rescale_multiplier(x[usize(at)] - y_ref, x[usize(at)] - (*x_ref)[usize(at)], 1.0);
    }
    gx[usize(at)] += g[usize(out)] * m;
  });
  return gx;
}

void embedding_parameter_grads(const Node& node, const Buffer& ids, const Buffer& g, std::int64_t batch,
                               std::map<std::string, Buffer>& out) {
  const auto& p = std::get<EmbeddingParams>(node.params);
  Buffer gw(usize(p.num_embeddings * p.dim), 0.0);
  const auto T = node.shape[0];
  for (std::int64_t r = 0; r < batch * T; ++r) {
    const auto row = static_cast<std::int64_t>(ids[usize(r)]);
    for (std::int64_t d = 0; d < p.dim; ++d) gw[usize(row * p.dim + d)] += g[usize(r * p.dim + d)];
  }
  add_into(out[weight_name(node.id)], gw);
}

Buffer mean_backward(const Node& node, const Node& src, const Buffer& g, std::int64_t batch) {
  const auto s = split_axis(src.shape, std::get<MeanParams>(node.params).axis);
  Buffer gx(usize(batch * item_size(src)));
  const double scale = 1.0 / static_cast<double>(s.n);
  for (std::int64_t bo = 0; bo < batch * s.outer; ++bo) {
    const double* go = g.data() + bo * s.inner;
    for (std::int64_t j = 0; j < s.n; ++j) {
      double* dst = gx.data() + (bo * s.n + j) * s.inner;
      for (std::int64_t i = 0; i < s.inner; ++i) dst[i] = go[i] * scale;
    }
  }
  return gx;
}

}  // namespace

// ---------------------------------------------------------------------------

Objective resolve_target(const Model& model, const TargetSpec& target) {
  if (target.layer) {
    const int node = model.index_of(*target.layer);
    const auto n = item_size(model.node(node));
    if (!target.index || *target.index < 0 || *target.index >= n) {
      throw Error(ErrorCode::neuron_out_of_range,
                  "neuron index " + (target.index ? std::to_string(*target.index) : std::string("<none>")) +
                      " outside layer '" + *target.layer + "' of size " + std::to_string(n));
    }
    return {node, *target.index};
  }
  const auto n = model.output_size();
  if (!target.index) {
    if (n != 1) {
      throw Error(ErrorCode::target_out_of_range,
                  "model has " + std::to_string(n) + " outputs; a class index is required");
    }
    return {model.output_node(), 0};
  }
  if (*target.index < 0 || *target.index >= n) {
    throw Error(ErrorCode::target_out_of_range,
                "class index " + std::to_string(*target.index) + " outside [0, " + std::to_string(n) + ")");
  }
  return {model.output_node(), *target.index};
}

Activations forward_batch(const Model& model, std::int64_t batch, const std::vector<Feed>& feeds) {
  const auto& nodes = model.nodes();
  Activations acts;
  acts.batch = batch;
  acts.values.resize(nodes.size());
  acts.fed.assign(nodes.size(), false);
  for (const auto& feed : feeds) {
    const Node& node = model.node(feed.node);
    const auto expected = batch * item_size(node);
    if (static_cast<std::int64_t>(feed.data.size()) != expected) {
      throw Error(ErrorCode::shape_mismatch, "'" + node.id + "' expects " + std::to_string(expected) +
                                                 " values for a batch of " + std::to_string(batch) + ", got " +
                                                 std::to_string(feed.data.size()));
    }
    auto& slot = acts.values[usize(feed.node)];
    slot = feed.data;
    round_to(slot, model.dtype());
    acts.fed[usize(feed.node)] = true;
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& node = nodes[i];
    if (acts.fed[i] || node.kind == LayerKind::input) continue;
    const bool ready = std::all_of(node.sources.begin(), node.sources.end(), [&](int s) { return acts.has(s); });
    if (!ready) continue;
    acts.values[i] = forward_node(model, node, acts, batch);
    round_to(acts.values[i], model.dtype());
  }
  if (!acts.has(model.output_node())) {
    std::string missing;
    for (int in : model.input_nodes()) {
      if (!acts.has(in)) missing += (missing.empty() ? "'" : ", '") + model.node(in).id + "'";
    }
    throw Error(ErrorCode::shape_mismatch, "output is not computable; missing input(s) " + missing);
  }
  return acts;
}

BackwardResult backward_batch(const Model& model, const Activations& acts, const Objective& objective,
                              const BackwardOptions& options) {
  const auto& nodes = model.nodes();
  const auto batch = acts.batch;
  if (options.mode == GradOverride::deeplift_rescale) {
    if (!options.reference || options.reference->batch != batch) {
      throw Error(ErrorCode::invalid_parameter, "deeplift_rescale needs reference activations of the same batch");
    }
  }
  if (!acts.has(objective.node)) {
    throw Error(ErrorCode::unknown_layer_id, "'" + model.node(objective.node).id + "' was not computed");
  }
  BackwardResult result;
  result.node_grads.resize(nodes.size());
  {
    const auto n = item_size(model.node(objective.node));
    Buffer seed(usize(batch * n), 0.0);
    for (std::int64_t b = 0; b < batch; ++b) seed[usize(b * n + objective.index)] = 1.0;
    result.node_grads[usize(objective.node)] = std::move(seed);
  }

  for (int i = objective.node; i >= 0; --i) {
    const Node& node = nodes[usize(i)];
    const Buffer& g = result.node_grads[usize(i)];
    if (g.empty() || acts.fed[usize(i)] || node.kind == LayerKind::input) continue;
    const int s0 = node.sources.at(0);
    const Node& src = model.node(s0);
    const Buffer& x = acts.at(s0);
    const Buffer* x_ref = options.reference && options.reference->has(s0) ? &options.reference->at(s0) : nullptr;
    if (options.mode == GradOverride::deeplift_rescale && !x_ref &&
        (node.kind == LayerKind::relu || node.kind == LayerKind::maxpool2d)) {
      throw Error(ErrorCode::invalid_parameter, "no reference activation for '" + src.id + "'");
    }

    Buffer gx;
    switch (node.kind) {
      case LayerKind::linear:
        gx = linear_backward(node, g, batch);
        if (options.parameter_grads) linear_parameter_grads(node, x, g, batch, result.parameter_grads);
        break;
      case LayerKind::conv2d:
        gx = conv2d_backward(node, src, g, batch);
        if (options.parameter_grads) conv2d_parameter_grads(node, src, x, g, batch, result.parameter_grads);
        break;
      case LayerKind::maxpool2d: gx = maxpool_backward(node, src, x, g, batch, options, x_ref); break;
      case LayerKind::relu: gx = relu_backward(x, g, options, x_ref); break;
      case LayerKind::flatten: gx = g; break;
      case LayerKind::embedding:
        // Token ids are not differentiable; only the table receives a gradient.
        if (options.parameter_grads) embedding_parameter_grads(node, x, g, batch, result.parameter_grads);
        continue;
      case LayerKind::mean: gx = mean_backward(node, src, g, batch); break;
      case LayerKind::concat: {
        const auto total = item_size(node);
        std::int64_t offset = 0;
        for (int s : node.sources) {
          const auto n = item_size(model.node(s));
          Buffer part(usize(batch * n));
          for (std::int64_t b = 0; b < batch; ++b) std::copy_n(g.data() + b * total + offset, n, part.data() + b * n);
          round_to(part, model.dtype());
          add_into(result.node_grads[usize(s)], part);
          offset += n;
        }
        continue;
      }
      case LayerKind::input: continue;
    }
    round_to(gx, model.dtype());
    add_into(result.node_grads[usize(s0)], gx);
  }
  return result;
}

// ---------------------------------------------------------------------------
// single-sample wrappers

namespace {

std::vector<Feed> feeds_from(const Model& model, const TensorMap& inputs) {
  std::vector<Feed> feeds;
  for (const auto& [name, tensor] : inputs) {
    const int node = model.index_of(name);
    if (tensor.shape() != model.node(node).shape) {
      throw Error(ErrorCode::shape_mismatch, "'" + name + "' declared " + shape_string(model.node(node).shape) +
                                                 ", got " + shape_string(tensor.shape()));
    }
    feeds.push_back({node, tensor.values()});
  }
  return feeds;
}

}  // namespace

EvalOutput eval_graph(const Model& model, const TensorMap& inputs, const std::set<std::string>& capture) {
  const auto acts = forward_batch(model, 1, feeds_from(model, inputs));
  EvalOutput out;
  const Node& o = model.node(model.output_node());
  out.outputs = Tensor(o.shape, acts.at(model.output_node()), model.dtype());
  for (const auto& id : capture) {
    const int node = model.index_of(id);
    if (!acts.has(node)) throw Error(ErrorCode::unknown_layer_id, "'" + id + "' was not computed in this pass");
    out.activations.emplace(id, Tensor(model.node(node).shape, acts.at(node), model.dtype()));
  }
  return out;
}

TensorMap backward(const Model& model, const TensorMap& inputs, const TargetSpec& target, GradOverride mode,
                   const std::vector<std::string>& wrt, const TensorMap* reference) {
  const auto objective = resolve_target(model, target);
  const auto acts = forward_batch(model, 1, feeds_from(model, inputs));
  std::optional<Activations> ref_acts;
  BackwardOptions options;
  options.mode = mode;
  if (mode == GradOverride::deeplift_rescale) {
    if (!reference) throw Error(ErrorCode::invalid_parameter, "deeplift_rescale requires reference inputs");
    ref_acts = forward_batch(model, 1, feeds_from(model, *reference));
    options.reference = &*ref_acts;
  }
  std::vector<std::string> wanted = wrt;
  if (wanted.empty()) {
    for (const auto& [name, t] : inputs) wanted.push_back(name);
  }
  for (const auto& id : wanted) {
    if (!model.find(id) && model.weights().contains(id)) options.parameter_grads = true;
  }
  const auto grads = backward_batch(model, acts, objective, options);
  TensorMap out;
  for (const auto& id : wanted) {
    if (auto node = model.find(id)) {
      const auto& g = grads.node_grads[usize(*node)];
      const auto& shape = model.node(*node).shape;
      out.emplace(id, g.empty() ? Tensor::zeros(shape, model.dtype()) : Tensor(shape, g, model.dtype()));
    } else if (auto w = model.weights().find(id); w != model.weights().end()) {
      auto it = grads.parameter_grads.find(id);
      out.emplace(id, it == grads.parameter_grads.end() ? Tensor::zeros(w->second.shape(), model.dtype())
                                                        : Tensor(w->second.shape(), it->second, model.dtype()));
    } else {
      throw Error(ErrorCode::unknown_layer_id, "nothing named '" + id + "' to differentiate against");
    }
  }
  return out;
}

double gradcheck(const Model& model, const TensorMap& inputs, const TargetSpec& target, bool include_parameters) {
  constexpr double h = 1e-5;
  const auto objective = resolve_target(model, target);
  std::vector<std::string> wrt;
  for (const auto& [name, t] : inputs) wrt.push_back(name);
  if (include_parameters) {
    for (const auto& [name, t] : model.weights()) wrt.push_back(name);
  }
  const auto analytic = backward(model, inputs, target, GradOverride::none, wrt);

  const auto evaluate = [&](const Model& m, const TensorMap& in) {
    const auto acts = forward_batch(m, 1, feeds_from(m, in));
    return acts.at(objective.node)[usize(objective.index)];
  };
  const auto rel_error = [](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
  };

  double worst = 0.0;
  for (const auto& [name, tensor] : inputs) {
    // Token ids are discrete; their embedding is checked through its weights.
    const Node& fed = model.node(model.index_of(name));
    const bool discrete = std::any_of(fed.consumers.begin(), fed.consumers.end(),
                                      [&](int c) { return model.node(c).kind == LayerKind::embedding; });
    if (discrete) continue;
    const auto& grad = analytic.at(name);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      auto plus = tensor.values();
      auto minus = tensor.values();
      plus[i] += h;
      minus[i] -= h;
      TensorMap in_plus = inputs, in_minus = inputs;
      in_plus.insert_or_assign(name, Tensor(tensor.shape(), std::move(plus), tensor.dtype()));
      in_minus.insert_or_assign(name, Tensor(tensor.shape(), std::move(minus), tensor.dtype()));
      const double fd = (evaluate(model, in_plus) - evaluate(model, in_minus)) / (2.0 * h);
      worst = std::max(worst, rel_error(grad[i], fd));
    }
  }
  if (include_parameters) {
    for (const auto& [name, tensor] : model.weights()) {
      const auto& grad = analytic.at(name);
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        auto plus = tensor.values();
        auto minus = tensor.values();
        plus[i] += h;
        minus[i] -= h;
        WeightStore w_plus = model.weights(), w_minus = model.weights();
        w_plus.insert_or_assign(name, Tensor(tensor.shape(), std::move(plus), tensor.dtype()));
        w_minus.insert_or_assign(name, Tensor(tensor.shape(), std::move(minus), tensor.dtype()));
        const Model m_plus(model.spec(), std::move(w_plus));
        const Model m_minus(model.spec(), std::move(w_minus));
        const double fd = (evaluate(m_plus, inputs) - evaluate(m_minus, inputs)) / (2.0 * h);
        worst = std::max(worst, rel_error(grad[i], fd));
      }
    }
  }
  return worst;
}

}  // namespace attrkit
