#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "tnanet/feature_matrix.hpp"
#include "tnanet/optim.hpp"
#include "tnanet/tensor.hpp"

namespace tnanet {

/// Hidden-unit transfer of the encoder; linear by default.
enum class Activation { linear, sigmoid };

/// One encoder layer: h = W v + b, v' = W^T h + b_star.
struct RbmLayer {
  Parameter weight;     // (out, in)
  Parameter bias;       // (out)
  Parameter bias_back;  // (in)

  RbmLayer() = default;
  RbmLayer(std::size_t in, std::size_t out)
      : weight(Tensor({out, in}, 0.0)), bias(Tensor({out}, 0.0)), bias_back(Tensor({in}, 0.0)) {}

  std::size_t in_dim() const { return weight.value.dim(1); }
  std::size_t out_dim() const { return weight.value.dim(0); }

  void init(Rng& rng) {
    init_uniform_fan_in(weight.value, in_dim(), rng);
    bias.value.fill(0.0);
    bias_back.value.fill(0.0);
  }
};

/// Two-layer encoder for one feature channel.
struct DbnStack {
  std::array<RbmLayer, 2> layers;
  std::size_t channel_index = 0;

  DbnStack() = default;
  DbnStack(std::size_t channel, std::size_t t, std::size_t h1, std::size_t h2)
      : layers{RbmLayer(t, h1), RbmLayer(h1, h2)}, channel_index(channel) {}

  std::size_t input_dim() const { return layers[0].in_dim(); }
  std::size_t output_dim() const { return layers[1].out_dim(); }
};

/// Encoder widths for a series of length t, keeping the 70 -> 50 -> 25 ratio.
inline std::pair<std::size_t, std::size_t> encoder_widths(std::size_t t) {
  const auto scaled = static_cast<std::size_t>(std::llround(static_cast<double>(t) * 5.0 / 7.0));
  const std::size_t h1 = std::min<std::size_t>(50, std::max<std::size_t>(8, scaled));
  return {h1, h1 / 2};
}

inline std::vector<DbnStack> make_dbn(std::size_t channels, std::size_t t, std::size_t h1, std::size_t h2, Rng& rng) {
  if (channels == 0 || t == 0 || h1 == 0 || h2 == 0) throw DimensionError("make_dbn: zero dimension");
  std::vector<DbnStack> out;
  out.reserve(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    out.emplace_back(c, t, h1, h2);
    for (auto& l : out.back().layers) l.init(rng);
  }
  return out;
}

namespace detail_dbn {

inline double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

inline void activate(std::vector<double>& v, Activation act) {
  if (act == Activation::sigmoid) {
    for (auto& x : v) x = sigmoid(x);
  }
}

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace detail_dbn

inline std::vector<double> rbm_forward(const RbmLayer& layer, std::span<const double> v,
                                       Activation act = Activation::linear) {
  const std::size_t in = layer.in_dim(), out = layer.out_dim();
  if (v.size() != in) throw DimensionError(detail::concat("rbm_forward: input length ", v.size(), ", layer expects ", in));
  const double* w = layer.weight.value.data();
  std::vector<double> h(out);
  for (std::size_t i = 0; i < out; ++i) {
    double s = layer.bias.value[i];
    for (std::size_t j = 0; j < in; ++j) s += w[i * in + j] * v[j];
    h[i] = s;
  }
  detail_dbn::activate(h, act);
  return h;
}

inline std::vector<double> rbm_reconstruct(const RbmLayer& layer, std::span<const double> h,
                                           Activation act = Activation::linear) {
  const std::size_t in = layer.in_dim(), out = layer.out_dim();
  if (h.size() != out) {
    throw DimensionError(detail::concat("rbm_reconstruct: hidden length ", h.size(), ", layer has ", out));
  }
  const double* w = layer.weight.value.data();
  std::vector<double> v(layer.bias_back.value.vec());
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t j = 0; j < in; ++j) v[j] += w[i * in + j] * h[i];
  }
  detail_dbn::activate(v, act);
  return v;
}

/// L1 distance.
inline double reconstruction_loss(std::span<const double> v, std::span<const double> v_next) {
  if (v.size() != v_next.size()) throw DimensionError("reconstruction_loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += std::abs(v[i] - v_next[i]);
  return s;
}

/// Loss of one forward-reconstruct pass, with gradients accumulated into the layer.
inline double rbm_reconstruction_step(RbmLayer& layer, std::span<const double> v, Activation act) {
  const std::size_t in = layer.in_dim(), out = layer.out_dim();
  const auto h = rbm_forward(layer, v, act);
  const auto vr = rbm_reconstruct(layer, h, act);
  const double loss = reconstruction_loss(v, vr);

  const double* w = layer.weight.value.data();
  double* gw = layer.weight.grad.data();
  std::vector<double> r(in);  // dL/d(pre-activation of v')
  for (std::size_t j = 0; j < in; ++j) {
    r[j] = detail_dbn::sign(vr[j] - v[j]);
    if (act == Activation::sigmoid) r[j] *= vr[j] * (1.0 - vr[j]);
    layer.bias_back.grad[j] += r[j];
  }
  for (std::size_t i = 0; i < out; ++i) {
    double dh = 0.0;
    for (std::size_t j = 0; j < in; ++j) dh += w[i * in + j] * r[j];
    if (act == Activation::sigmoid) dh *= h[i] * (1.0 - h[i]);
    layer.bias.grad[i] += dh;
    for (std::size_t j = 0; j < in; ++j) gw[i * in + j] += r[j] * h[i] + dh * v[j];
  }
  return loss;
}

struct SelfSupervisedOptions {
  std::size_t epochs = 3;
  double lr = 0.001;
  Activation activation = Activation::linear;
  std::uint64_t seed = 0;
};

/// Mean per-sample reconstruction loss (over samples and channels) for each layer and epoch.
struct SelfSupervisedReport {
  std::array<std::vector<double>, 2> epoch_loss;
};

/// Layer-wise reconstruction pre-training. Every sample is a channels x T
/// matrix whose row i feeds stack i; updates are per sample in seeded order.
inline SelfSupervisedReport self_supervised_train(std::vector<DbnStack>& stacks, const std::vector<FeatureMatrix>& data,
                                                  const SelfSupervisedOptions& opt) {
  SelfSupervisedReport report;
  if (data.empty() || opt.epochs == 0) return report;
  for (const auto& m : data) {
    if (m.rows != stacks.size() || m.cols != stacks.front().input_dim()) {
      throw DimensionError(detail::concat("self_supervised_train: sample is ", m.rows, "x", m.cols, ", encoder expects ",
                                          stacks.size(), "x", stacks.front().input_dim()));
    }
  }
  Rng rng(opt.seed);
  // layer inputs, per sample and channel
  std::vector<std::vector<std::vector<double>>> inputs(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    for (std::size_t c = 0; c < stacks.size(); ++c) {
      auto row = data[s].row(c);
      inputs[s].emplace_back(row.begin(), row.end());
    }
  }
  std::vector<std::size_t> order(data.size());
  for (std::size_t depth = 0; depth < 2; ++depth) {
    std::vector<ParamSet> sets(stacks.size());
    std::vector<AdamState> adam;
    adam.reserve(stacks.size());
    for (std::size_t c = 0; c < stacks.size(); ++c) {
      auto& l = stacks[c].layers[depth];
      sets[c].add("weight", l.weight);
      sets[c].add("bias", l.bias);
      sets[c].add("bias_back", l.bias_back);
      sets[c].zero_grad();
      adam.emplace_back(sets[c], opt.lr);
    }
    for (std::size_t e = 0; e < opt.epochs; ++e) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      double total = 0.0;
      for (std::size_t s : order) {
        for (std::size_t c = 0; c < stacks.size(); ++c) {
          total += rbm_reconstruction_step(stacks[c].layers[depth], inputs[s][c], opt.activation);
          adam_step(sets[c], adam[c]);
        }
      }
      report.epoch_loss[depth].push_back(total / static_cast<double>(data.size() * stacks.size()));
    }
    if (depth == 0) {
      for (auto& per_sample : inputs) {
        for (std::size_t c = 0; c < stacks.size(); ++c) {
          per_sample[c] = rbm_forward(stacks[c].layers[0], per_sample[c], opt.activation);
        }
      }
    }
  }
  return report;
}

/// Encodes each feature row with its own stack; result is (channels, H2).
inline Tensor dbn_encode(const std::vector<DbnStack>& stacks, const FeatureMatrix& m,
                         Activation act = Activation::linear) {
  if (stacks.empty()) throw DimensionError("dbn_encode: no stacks");
  if (m.rows != stacks.size() || m.cols != stacks.front().input_dim()) {
    throw DimensionError(detail::concat("dbn_encode: matrix is ", m.rows, "x", m.cols, ", encoder expects ",
                                        stacks.size(), "x", stacks.front().input_dim()));
  }
  const std::size_t h2 = stacks.front().output_dim();
  Tensor out({stacks.size(), h2});
  for (std::size_t c = 0; c < stacks.size(); ++c) {
    const auto h = rbm_forward(stacks[c].layers[1], rbm_forward(stacks[c].layers[0], m.row(c), act), act);
    std::copy(h.begin(), h.end(), out.data() + c * h2);
  }
  return out;
}

}  // namespace tnanet
