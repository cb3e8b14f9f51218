#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "tnanet/prob_pair.hpp"
#include "tnanet/tensor.hpp"

// Forward and backward passes of the layers making up the convolution and
// classification modules. Every backward function accumulates (+=) into the
// parameter gradient buffers it is given and returns the gradient w.r.t. its
// input.
namespace tnanet::nn {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Depthwise convolution spanning the whole channel axis.
// input (1, D, L), weights (F, D, 1) -> (F, 1, L)

inline Tensor depthwise_conv2d(const Tensor& input, const Tensor& weights) {
  if (input.rank() != 3 || input.dim(0) != 1) {
    throw DimensionError("depthwise_conv2d: input must be (1, D, L), got " + shape_str(input.shape()));
  }
  const std::size_t channels = input.dim(1), len = input.dim(2);
  if (weights.rank() != 3 || weights.dim(1) != channels || weights.dim(2) != 1) {
    throw DimensionError(detail::concat("depthwise_conv2d: weights must be (F, ", channels, ", 1), got ",
                                        shape_str(weights.shape())));
  }
  const std::size_t filters = weights.dim(0);
  Tensor out({filters, 1, len}, 0.0);
  for (std::size_t f = 0; f < filters; ++f) {
    double* o = out.data() + f * len;
    for (std::size_t d = 0; d < channels; ++d) {
      const double w = weights[f * channels + d];
      const double* x = input.data() + d * len;
      for (std::size_t t = 0; t < len; ++t) o[t] += w * x[t];
    }
  }
  return out;
}

inline Tensor depthwise_conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                                        Tensor* grad_weights) {
  const std::size_t channels = input.dim(1), len = input.dim(2), filters = weights.dim(0);
  require_shape(grad_out, {filters, 1, len}, "depthwise_conv2d_backward grad");
  Tensor grad_in(input.shape(), 0.0);
  for (std::size_t f = 0; f < filters; ++f) {
    const double* g = grad_out.data() + f * len;
    for (std::size_t d = 0; d < channels; ++d) {
      const double* x = input.data() + d * len;
      double* gx = grad_in.data() + d * len;
      const double w = weights[f * channels + d];
      double acc = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        acc += g[t] * x[t];
        gx[t] += w * g[t];
      }
      if (grad_weights) (*grad_weights)[f * channels + d] += acc;
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Zero padding on the time (last) axis of an (F, 1, L) tensor.

inline Tensor zero_pad_time(const Tensor& x, std::size_t left, std::size_t right) {
  const std::size_t ch = x.dim(0), len = x.dim(2), out_len = len + left + right;
  Tensor out({ch, 1, out_len}, 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    std::copy_n(x.data() + c * len, len, out.data() + c * out_len + left);
  }
  return out;
}

inline std::size_t pad_left(std::size_t kernel) { return (kernel - 1) / 2; }
inline std::size_t pad_right(std::size_t kernel) { return kernel / 2; }

// ---------------------------------------------------------------------------
// Separable convolution: zero pad ((K-1)//2, K//2), one K-tap kernel per
// channel (cross-correlation), then a 1x1 pointwise mix across channels.
// input (F, 1, L), depth (F, 1, K), point (F, F) -> (F, 1, L)

inline Tensor separable_depth_stage(const Tensor& padded, const Tensor& depth, std::size_t len) {
  const std::size_t ch = padded.dim(0), plen = padded.dim(2), k = depth.dim(2);
  Tensor out({ch, 1, len}, 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    const double* x = padded.data() + c * plen;
    const double* w = depth.data() + c * k;
    double* o = out.data() + c * len;
    for (std::size_t t = 0; t < len; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += w[j] * x[t + j];
      o[t] = acc;
    }
  }
  return out;
}

inline void check_separable_shapes(const Tensor& input, const Tensor& depth, const Tensor& point) {
  if (input.rank() != 3 || input.dim(1) != 1) {
    throw DimensionError("separable_conv2d: input must be (F, 1, L), got " + shape_str(input.shape()));
  }
  const std::size_t ch = input.dim(0);
  if (depth.rank() != 3 || depth.dim(0) != ch || depth.dim(1) != 1) {
    throw DimensionError(detail::concat("separable_conv2d: depth weights must be (", ch, ", 1, K), got ",
                                        shape_str(depth.shape())));
  }
  if (point.rank() != 2 || point.dim(0) != point.dim(1) || point.dim(1) != ch) {
    throw DimensionError(detail::concat("separable_conv2d: pointwise weights must be (", ch, ", ", ch,
                                        "), got ", shape_str(point.shape())));
  }
}

inline Tensor separable_conv2d(const Tensor& input, const Tensor& depth, const Tensor& point) {
  check_separable_shapes(input, depth, point);
  const std::size_t ch = input.dim(0), len = input.dim(2), k = depth.dim(2);
  const Tensor padded = zero_pad_time(input, pad_left(k), pad_right(k));
  const Tensor mid = separable_depth_stage(padded, depth, len);
  Tensor out({ch, 1, len}, 0.0);
  for (std::size_t g = 0; g < ch; ++g) {
    double* o = out.data() + g * len;
    for (std::size_t c = 0; c < ch; ++c) {
      const double w = point.at(g, c);
      const double* m = mid.data() + c * len;
      for (std::size_t t = 0; t < len; ++t) o[t] += w * m[t];
    }
  }
  return out;
}

inline Tensor separable_conv2d_backward(const Tensor& input, const Tensor& depth, const Tensor& point,
                                        const Tensor& grad_out, Tensor* grad_depth, Tensor* grad_point) {
  check_separable_shapes(input, depth, point);
  const std::size_t ch = input.dim(0), len = input.dim(2), k = depth.dim(2);
  require_shape(grad_out, {ch, 1, len}, "separable_conv2d_backward grad");
  const std::size_t left = pad_left(k);
  const Tensor padded = zero_pad_time(input, left, pad_right(k));
  const std::size_t plen = padded.dim(2);
  const Tensor mid = separable_depth_stage(padded, depth, len);

  Tensor grad_mid({ch, 1, len}, 0.0);
  for (std::size_t g = 0; g < ch; ++g) {
    const double* go = grad_out.data() + g * len;
    for (std::size_t c = 0; c < ch; ++c) {
      const double* m = mid.data() + c * len;
      double* gm = grad_mid.data() + c * len;
      const double w = point.at(g, c);
      double acc = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        acc += go[t] * m[t];
        gm[t] += w * go[t];
      }
      if (grad_point) grad_point->at(g, c) += acc;
    }
  }

  Tensor grad_in(input.shape(), 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    const double* x = padded.data() + c * plen;
    const double* w = depth.data() + c * k;
    const double* gm = grad_mid.data() + c * len;
    double* gx = grad_in.data() + c * len;
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        acc += gm[t] * x[t + j];
        // padded index t + j maps to input index t + j - left
        const std::size_t pi = t + j;
        if (pi >= left && pi - left < len) gx[pi - left] += w[j] * gm[t];
      }
      if (grad_depth) (*grad_depth)[c * k + j] += acc;
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Batch normalization over the first (channel) axis. Statistics pool every
// element of a channel across the whole batch.

struct BatchNormState {
  Parameter gamma;
  Parameter beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : gamma(Tensor({channels}, 1.0)),
        beta(Tensor({channels}, 0.0)),
        running_mean({channels}, 0.0),
        running_var({channels}, 1.0) {}

  std::size_t channels() const { return gamma.value.size(); }
};

struct BatchNormCache {
  Mode mode = Mode::eval;
  std::vector<Tensor> x_hat;
  std::vector<double> inv_std;  // per channel
};

inline std::vector<Tensor> batch_norm(std::span<const Tensor> batch, BatchNormState& state, Mode mode,
                                      BatchNormCache* cache = nullptr, bool update_running = true) {
  if (batch.empty()) throw DimensionError("batch_norm: empty batch");
  const std::size_t ch = state.channels();
  const Shape& shape = batch[0].shape();
  if (shape.empty() || shape[0] != ch) {
    throw DimensionError(detail::concat("batch_norm: expected ", ch, " channels on axis 0, got ",
                                        shape_str(shape)));
  }
  for (const auto& t : batch) require_shape(t, shape, "batch_norm batch member");
  const std::size_t per = batch[0].size() / ch;
  const double count = static_cast<double>(per * batch.size());

  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (const auto& t : batch) {
        const double* x = t.data() + c * per;
        for (std::size_t i = 0; i < per; ++i) s += x[i];
      }
      mean[c] = s / count;
      double ss = 0.0;
      for (const auto& t : batch) {
        const double* x = t.data() + c * per;
        for (std::size_t i = 0; i < per; ++i) ss += (x[i] - mean[c]) * (x[i] - mean[c]);
      }
      var[c] = ss / count;
    }
    if (update_running) {
      const double m = state.momentum;
      // running variance tracks the unbiased estimate
      const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
      for (std::size_t c = 0; c < ch; ++c) {
        state.running_mean[c] = (1.0 - m) * state.running_mean[c] + m * mean[c];
        state.running_var[c] = (1.0 - m) * state.running_var[c] + m * var[c] * unbias;
      }
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = state.running_mean[c];
      var[c] = state.running_var[c];
    }
  }

  std::vector<double> inv_std(ch);
  for (std::size_t c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);

  std::vector<Tensor> out;
  out.reserve(batch.size());
  if (cache) {
    cache->mode = mode;
    cache->inv_std = inv_std;
    cache->x_hat.clear();
    cache->x_hat.reserve(batch.size());
  }
  for (const auto& t : batch) {
    Tensor y(shape, 0.0);
    Tensor xh(shape, 0.0);
    for (std::size_t c = 0; c < ch; ++c) {
      const double g = state.gamma.value[c], b = state.beta.value[c];
      for (std::size_t i = 0; i < per; ++i) {
        const std::size_t idx = c * per + i;
        xh[idx] = (t[idx] - mean[c]) * inv_std[c];
        y[idx] = g * xh[idx] + b;
      }
    }
    if (cache) cache->x_hat.push_back(std::move(xh));
    out.push_back(std::move(y));
  }
  return out;
}

inline Tensor batch_norm(const Tensor& input, BatchNormState& state, Mode mode) {
  return batch_norm(std::span<const Tensor>(&input, 1), state, mode).front();
}

inline std::vector<Tensor> batch_norm_backward(std::span<const Tensor> grad_out, BatchNormState& state,
                                               const BatchNormCache& cache) {
  const std::size_t ch = state.channels();
  const std::size_t n = grad_out.size();
  if (n != cache.x_hat.size()) throw DimensionError("batch_norm_backward: batch size mismatch with cache");
  const std::size_t per = grad_out[0].size() / ch;
  const double count = static_cast<double>(per * n);

  std::vector<double> sum_dy(ch, 0.0), sum_dy_xh(ch, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t i = 0; i < per; ++i) {
        const std::size_t idx = c * per + i;
        sum_dy[c] += grad_out[b][idx];
        sum_dy_xh[c] += grad_out[b][idx] * cache.x_hat[b][idx];
      }
    }
  }
  for (std::size_t c = 0; c < ch; ++c) {
    state.gamma.grad[c] += sum_dy_xh[c];
    state.beta.grad[c] += sum_dy[c];
  }

  std::vector<Tensor> grad_in;
  grad_in.reserve(n);
  for (std::size_t b = 0; b < n; ++b) {
    Tensor gx(grad_out[b].shape(), 0.0);
    for (std::size_t c = 0; c < ch; ++c) {
      const double g = state.gamma.value[c], is = cache.inv_std[c];
      for (std::size_t i = 0; i < per; ++i) {
        const std::size_t idx = c * per + i;
        const double dy = grad_out[b][idx];
        if (cache.mode == Mode::train) {
          gx[idx] = g * is / count * (count * dy - sum_dy[c] - cache.x_hat[b][idx] * sum_dy_xh[c]);
        } else {
          gx[idx] = g * is * dy;
        }
      }
    }
    grad_in.push_back(std::move(gx));
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// ELU with alpha = 1.

inline Tensor elu(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.values()) v = v >= 0.0 ? v : std::expm1(v);
  return out;
}

inline Tensor elu_backward(const Tensor& input, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (input[i] < 0.0) g[i] *= std::exp(input[i]);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Non-overlapping average pooling along time; the tail that does not fill a
// window is dropped.
// input (F, 1, L) -> (F, 1, L // pool)

inline Tensor avg_pool2d(const Tensor& input, std::size_t pool) {
  if (pool == 0) throw DimensionError("avg_pool2d: pool size must be >= 1");
  if (input.rank() != 3 || input.dim(1) != 1) {
    throw DimensionError("avg_pool2d: input must be (F, 1, L), got " + shape_str(input.shape()));
  }
  const std::size_t ch = input.dim(0), len = input.dim(2), out_len = len / pool;
  if (out_len == 0) {
    throw DimensionError(detail::concat("avg_pool2d: length ", len, " is shorter than pool ", pool));
  }
  Tensor out({ch, 1, out_len}, 0.0);
  const double scale = 1.0 / static_cast<double>(pool);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t o = 0; o < out_len; ++o) {
      double s = 0.0;
      for (std::size_t j = 0; j < pool; ++j) s += input[c * len + o * pool + j];
      out[c * out_len + o] = s * scale;
    }
  }
  return out;
}

inline Tensor avg_pool2d_backward(const Shape& input_shape, std::size_t pool, const Tensor& grad_out) {
  const std::size_t ch = input_shape[0], len = input_shape[2], out_len = grad_out.dim(2);
  Tensor g(input_shape, 0.0);
  const double scale = 1.0 / static_cast<double>(pool);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t o = 0; o < out_len; ++o) {
      for (std::size_t j = 0; j < pool; ++j) g[c * len + o * pool + j] = grad_out[c * out_len + o] * scale;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Fully connected layer, softmax and the cross-entropy loss on logits.

inline Tensor linear(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2 || weights.dim(1) != x.size() || bias.size() != weights.dim(0)) {
    throw DimensionError(detail::concat("linear: weights ", shape_str(weights.shape()), ", bias ",
                                        shape_str(bias.shape()), " incompatible with input of size ",
                                        x.size()));
  }
  const std::size_t out = weights.dim(0), in = weights.dim(1);
  Tensor z({out}, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    double s = bias[o];
    for (std::size_t i = 0; i < in; ++i) s += weights.at(o, i) * x[i];
    z[o] = s;
  }
  return z;
}

inline Tensor linear_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_z, Tensor* grad_w,
                              Tensor* grad_b) {
  const std::size_t out = weights.dim(0), in = weights.dim(1);
  Tensor gx({in}, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double g = grad_z[o];
    if (grad_b) (*grad_b)[o] += g;
    for (std::size_t i = 0; i < in; ++i) {
      if (grad_w) grad_w->at(o, i) += g * x[i];
      gx[i] += weights.at(o, i) * g;
    }
  }
  return gx;
}

inline ProbPair softmax(const Tensor& logits) {
  if (logits.size() != 2) throw DimensionError("softmax: two logits expected");
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  const double s = e0 + e1;
  ProbPair pp;
  pp.p = {e0 / s, e1 / s};
  return pp;
}

inline ProbPair linear_softmax(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2 || weights.dim(0) != 2) {
    throw DimensionError("linear_softmax: exactly two output classes are supported");
  }
  return softmax(linear(x, weights, bias));
}

/// -z[label] + log(sum_j exp(z[j])), evaluated stably.
inline double cross_entropy_loss(const Tensor& logits, int label) {
  if (logits.size() != 2 || (label != 0 && label != 1)) {
    throw DimensionError("cross_entropy_loss: two logits and a binary label expected");
  }
  const double m = std::max(logits[0], logits[1]);
  const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
  return lse - logits[static_cast<std::size_t>(label)];
}

inline Tensor cross_entropy_grad(const Tensor& logits, int label) {
  const ProbPair pp = softmax(logits);
  Tensor g({2}, 0.0);
  g[0] = pp.p[0] - (label == 0 ? 1.0 : 0.0);
  g[1] = pp.p[1] - (label == 1 ? 1.0 : 0.0);
  return g;
}

}  // namespace tnanet::nn
