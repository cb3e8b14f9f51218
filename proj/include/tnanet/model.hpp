#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tnanet/dbn.hpp"
#include "tnanet/layers.hpp"
#include "tnanet/optim.hpp"
#include "tnanet/prob_pair.hpp"

namespace tnanet {

struct HyperParams {
  std::size_t channels = 38;  // feature rows of the input matrix
  std::size_t length = 70;    // time steps (windows) per row
  std::size_t hidden1 = 50;
  std::size_t hidden2 = 25;
  std::size_t filters = 16;
  std::size_t classes = 2;
  double lr = 0.001;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double min_delta = 1e-5;
  Activation activation = Activation::linear;

  /// Widths derived from the input shape.
  static HyperParams for_input(std::size_t channels, std::size_t length) {
    HyperParams hp;
    hp.channels = channels;
    hp.length = length;
    std::tie(hp.hidden1, hp.hidden2) = encoder_widths(length);
    return hp;
  }

  std::size_t pooled1() const { return hidden2 / 4; }
  std::size_t pool2() const { return std::min<std::size_t>(pooled1(), 8); }
  std::size_t pooled2() const { return pool2() == 0 ? 0 : pooled1() / pool2(); }
  std::size_t flatten_dim() const { return filters * pooled2(); }
  std::size_t kernel() const { return filters; }

  void validate() const {
    if (channels == 0 || length == 0 || hidden1 == 0 || hidden2 == 0) {
      throw ConfigError("hyperparameters: channels, length and encoder widths must be positive");
    }
    if (filters == 0) throw ConfigError("hyperparameters: filters must be >= 1");
    if (classes != 2) throw ConfigError("hyperparameters: only two classes are supported");
    if (pooled1() == 0) {
      throw ConfigError(detail::concat("hyperparameters: second encoder width ", hidden2, " leaves nothing after pooling by 4"));
    }
    if (!(lr > 0.0)) throw ConfigError("hyperparameters: learning rate must be positive");
  }

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// All trainable state of the network plus batch-norm running statistics.
struct TnanetParams {
  HyperParams hp;
  std::vector<DbnStack> dbn;
  Parameter depthwise;  // (F, D, 1)
  nn::BatchNormState bn1;
  Parameter sep_depth;  // (F, 1, K)
  Parameter sep_point;  // (F, F)
  nn::BatchNormState bn2;
  Parameter linear_w;  // (C, flatten)
  Parameter linear_b;  // (C)

  TnanetParams() = default;
  explicit TnanetParams(const HyperParams& h)
      : hp(checked(h)),
        depthwise(Tensor({h.filters, h.channels, 1}, 0.0)),
        bn1(h.filters),
        sep_depth(Tensor({h.filters, 1, h.kernel()}, 0.0)),
        sep_point(Tensor({h.filters, h.filters}, 0.0)),
        bn2(h.filters),
        linear_w(Tensor({h.classes, h.flatten_dim()}, 0.0)),
        linear_b(Tensor({h.classes}, 0.0)) {
    dbn.reserve(h.channels);
    for (std::size_t c = 0; c < h.channels; ++c) dbn.emplace_back(c, h.length, h.hidden1, h.hidden2);
  }

  static TnanetParams initialized(const HyperParams& h, std::uint64_t seed) {
    TnanetParams p(h);
    Rng rng(seed);
    for (auto& s : p.dbn) {
      for (auto& l : s.layers) l.init(rng);
    }
    init_uniform_fan_in(p.depthwise.value, h.channels, rng);
    init_uniform_fan_in(p.sep_depth.value, h.kernel(), rng);
    init_uniform_fan_in(p.sep_point.value, h.filters, rng);
    init_uniform_fan_in(p.linear_w.value, h.flatten_dim(), rng);
    return p;
  }

  static const HyperParams& checked(const HyperParams& h) {
    h.validate();
    return h;
  }

  /// Trainable parameters in a fixed order.
  ParamSet params() {
    ParamSet ps;
    for (auto& s : dbn) {
      for (std::size_t l = 0; l < 2; ++l) {
        const std::string pre = detail::concat("dbn.", s.channel_index, ".", l, ".");
        ps.add(pre + "weight", s.layers[l].weight);
        ps.add(pre + "bias", s.layers[l].bias);
        ps.add(pre + "bias_back", s.layers[l].bias_back);
      }
    }
    ps.add("depthwise", depthwise);
    ps.add("bn1.gamma", bn1.gamma);
    ps.add("bn1.beta", bn1.beta);
    ps.add("sep_depth", sep_depth);
    ps.add("sep_point", sep_point);
    ps.add("bn2.gamma", bn2.gamma);
    ps.add("bn2.beta", bn2.beta);
    ps.add("linear_w", linear_w);
    ps.add("linear_b", linear_b);
    return ps;
  }
};

/// Intermediate activations of one sample.
struct SampleTrace {
  std::vector<std::vector<double>> h1;  // per channel, after the first encoder layer
  Tensor encoded;                       // (1, D, H2)
  Tensor conv1;                         // depthwise output (F, 1, H2)
  Tensor bn1_out;
  Tensor pool1;                         // (F, 1, H2 // 4)
  Tensor conv2;                         // separable output
  Tensor bn2_out;
  Tensor pool2;                         // (F, 1, (H2 // 4) // P)
  Tensor flat;
  Tensor logits;
};

struct BatchTrace {
  nn::Mode mode = nn::Mode::eval;
  std::vector<SampleTrace> samples;
  nn::BatchNormCache bn1_cache;
  nn::BatchNormCache bn2_cache;
};

namespace detail_model {

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const DimensionError& e) {
    throw DimensionError(detail::concat("stage ", name, ": ", e.what()));
  }
}

inline std::vector<double> encode_channel(const DbnStack& s, std::span<const double> row, Activation act,
                                          std::vector<double>* h1) {
  auto a = rbm_forward(s.layers[0], row, act);
  auto b = rbm_forward(s.layers[1], a, act);
  if (h1) *h1 = std::move(a);
  return b;
}

}  // namespace detail_model

/// Batched forward pass. In train mode batch normalization pools statistics
/// over the batch; `update_running` controls the running-statistics update.
inline std::vector<Tensor> forward_batch(TnanetParams& p, std::span<const FeatureMatrix* const> batch, nn::Mode mode,
                                         BatchTrace* trace = nullptr, bool update_running = true) {
  using namespace nn;
  const HyperParams& hp = p.hp;
  if (batch.empty()) throw DimensionError("forward: empty batch");
  std::vector<SampleTrace> st(batch.size());
  std::vector<Tensor> pre_bn1;
  pre_bn1.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const FeatureMatrix& m = *batch[b];
    if (m.rows != hp.channels || m.cols != hp.length) {
      throw DimensionError(detail::concat("stage input: matrix is (", m.rows, ", ", m.cols, "), model expects (",
                                          hp.channels, ", ", hp.length, ")"));
    }
    auto& s = st[b];
    s.h1.resize(hp.channels);
    s.encoded = Tensor({1, hp.channels, hp.hidden2});
    detail_model::stage("dbn", [&] {
      for (std::size_t c = 0; c < hp.channels; ++c) {
        auto h = detail_model::encode_channel(p.dbn[c], m.row(c), hp.activation, &s.h1[c]);
        std::copy(h.begin(), h.end(), s.encoded.data() + c * hp.hidden2);
      }
      return 0;
    });
    s.conv1 = detail_model::stage("depthwise", [&] { return depthwise_conv2d(s.encoded, p.depthwise.value); });
    pre_bn1.push_back(s.conv1);
  }
  BatchTrace local;
  BatchTrace& tr = trace ? *trace : local;
  tr.mode = mode;
  auto bn1 = detail_model::stage("bn1", [&] { return batch_norm(pre_bn1, p.bn1, mode, &tr.bn1_cache, update_running); });
  std::vector<Tensor> pre_bn2;
  pre_bn2.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto& s = st[b];
    s.bn1_out = std::move(bn1[b]);
    s.pool1 = detail_model::stage("pool1", [&] { return avg_pool2d(elu(s.bn1_out), 4); });
    s.conv2 = detail_model::stage("separable", [&] {
      return separable_conv2d(s.pool1, p.sep_depth.value, p.sep_point.value);
    });
    pre_bn2.push_back(s.conv2);
  }
  auto bn2 = detail_model::stage("bn2", [&] { return batch_norm(pre_bn2, p.bn2, mode, &tr.bn2_cache, update_running); });
  std::vector<Tensor> logits;
  logits.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto& s = st[b];
    s.bn2_out = std::move(bn2[b]);
    s.pool2 = detail_model::stage("pool2", [&] { return avg_pool2d(elu(s.bn2_out), hp.pool2()); });
    s.flat = s.pool2.reshaped({s.pool2.size()});
    s.logits = detail_model::stage("linear", [&] { return linear(s.flat, p.linear_w.value, p.linear_b.value); });
    logits.push_back(s.logits);
  }
  tr.samples = std::move(st);
  return logits;
}

/// Accumulates parameter gradients given d(loss)/d(logits) for every sample of the traced batch.
inline void backward_batch(TnanetParams& p, std::span<const FeatureMatrix* const> batch, const BatchTrace& tr,
                           std::span<const Tensor> grad_logits) {
  using namespace nn;
  const HyperParams& hp = p.hp;
  const std::size_t n = batch.size();
  if (grad_logits.size() != n || tr.samples.size() != n) throw DimensionError("backward: batch size mismatch");
  std::vector<Tensor> g_bn2(n);
  for (std::size_t b = 0; b < n; ++b) {
    const auto& s = tr.samples[b];
    Tensor g_flat = linear_backward(s.flat, p.linear_w.value, grad_logits[b], &p.linear_w.grad, &p.linear_b.grad);
    Tensor g_pool2 = g_flat.reshaped(s.pool2.shape());
    g_bn2[b] = elu_backward(s.bn2_out, avg_pool2d_backward(s.bn2_out.shape(), hp.pool2(), g_pool2));
  }
  auto g_conv2 = batch_norm_backward(g_bn2, p.bn2, tr.bn2_cache);
  std::vector<Tensor> g_bn1(n);
  for (std::size_t b = 0; b < n; ++b) {
    const auto& s = tr.samples[b];
    Tensor g_pool1 = separable_conv2d_backward(s.pool1, p.sep_depth.value, p.sep_point.value, g_conv2[b],
                                               &p.sep_depth.grad, &p.sep_point.grad);
    g_bn1[b] = elu_backward(s.bn1_out, avg_pool2d_backward(s.bn1_out.shape(), 4, g_pool1));
  }
  auto g_conv1 = batch_norm_backward(g_bn1, p.bn1, tr.bn1_cache);
  const bool sig = hp.activation == Activation::sigmoid;
  for (std::size_t b = 0; b < n; ++b) {
    const auto& s = tr.samples[b];
    Tensor g_enc = depthwise_conv2d_backward(s.encoded, p.depthwise.value, g_conv1[b], &p.depthwise.grad);
    const FeatureMatrix& m = *batch[b];
    for (std::size_t c = 0; c < hp.channels; ++c) {
      auto& l1 = p.dbn[c].layers[0];
      auto& l2 = p.dbn[c].layers[1];
      std::vector<double> g2(g_enc.data() + c * hp.hidden2, g_enc.data() + (c + 1) * hp.hidden2);
      const double* h2 = s.encoded.data() + c * hp.hidden2;
      const auto& h1 = s.h1[c];
      if (sig) {
        for (std::size_t i = 0; i < hp.hidden2; ++i) g2[i] *= h2[i] * (1.0 - h2[i]);
      }
      std::vector<double> g1(hp.hidden1, 0.0);
      const double* w2 = l2.weight.value.data();
      double* gw2 = l2.weight.grad.data();
      for (std::size_t i = 0; i < hp.hidden2; ++i) {
        l2.bias.grad[i] += g2[i];
        for (std::size_t j = 0; j < hp.hidden1; ++j) {
          gw2[i * hp.hidden1 + j] += g2[i] * h1[j];
          g1[j] += w2[i * hp.hidden1 + j] * g2[i];
        }
      }
      if (sig) {
        for (std::size_t j = 0; j < hp.hidden1; ++j) g1[j] *= h1[j] * (1.0 - h1[j]);
      }
      auto row = m.row(c);
      double* gw1 = l1.weight.grad.data();
      for (std::size_t j = 0; j < hp.hidden1; ++j) {
        l1.bias.grad[j] += g1[j];
        const double g = g1[j];
        double* gr = gw1 + j * hp.length;
        for (std::size_t t = 0; t < hp.length; ++t) gr[t] += g * row[t];
      }
    }
  }
}

/// One labelled input for supervised training.
struct TrainingExample {
  const FeatureMatrix* matrix = nullptr;
  int label = 0;
};

/// Mean cross-entropy of a batch; when `with_grad` the gradient is accumulated into the parameters.
inline double batch_loss(TnanetParams& p, std::span<const TrainingExample> data, bool with_grad,
                         bool update_running = true) {
  std::vector<const FeatureMatrix*> xs;
  xs.reserve(data.size());
  for (const auto& e : data) xs.push_back(e.matrix);
  BatchTrace tr;
  auto logits = forward_batch(p, xs, nn::Mode::train, &tr, update_running);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  double loss = 0.0;
  std::vector<Tensor> grads;
  for (std::size_t b = 0; b < data.size(); ++b) {
    loss += nn::cross_entropy_loss(logits[b], data[b].label) * inv_n;
    if (with_grad) {
      Tensor g = nn::cross_entropy_grad(logits[b], data[b].label);
      for (auto& v : g.values()) v *= inv_n;
      grads.push_back(std::move(g));
    }
  }
  if (with_grad) backward_batch(p, xs, tr, grads);
  return loss;
}

struct TrainReport {
  std::vector<double> loss_curve;  // mean loss per epoch, measured before that epoch's update
  std::size_t epochs = 0;
  bool converged = false;  // stopped by the patience rule before the epoch cap
};

/// Full-batch Adam on the mean cross-entropy. Stops at max_epochs or once the
/// loss has failed to improve on its best value by min_delta for `patience` epochs.
inline TrainReport supervised_train(TnanetParams& p, std::span<const TrainingExample> data) {
  if (data.empty()) throw DataError("supervised_train: empty training set");
  for (const auto& e : data) {
    if (e.label != 0 && e.label != 1) throw DataError(detail::concat("supervised_train: label ", e.label, " not in {0, 1}"));
  }
  const HyperParams& hp = p.hp;
  ParamSet ps = p.params();
  ps.zero_grad();
  AdamState adam(ps, hp.lr);
  TrainReport rep;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < hp.max_epochs; ++epoch) {
    const double loss = batch_loss(p, data, true);
    if (!std::isfinite(loss)) {
      throw Error(detail::concat("supervised_train: non-finite loss ", loss, " at epoch ", epoch + 1, " (",
                                 data.size(), " samples, previous loss ",
                                 rep.loss_curve.empty() ? 0.0 : rep.loss_curve.back(), ")"));
    }
    adam_step(ps, adam);
    rep.loss_curve.push_back(loss);
    rep.epochs = epoch + 1;
    if (best - loss >= hp.min_delta) {
      best = loss;
      stale = 0;
    } else if (++stale >= hp.patience) {
      rep.converged = true;
      break;
    }
  }
  return rep;
}

/// Eval-mode logits and probabilities of one sample.
inline std::pair<Tensor, ProbPair> forward(TnanetParams& p, const FeatureMatrix& m, nn::Mode mode = nn::Mode::eval,
                                           BatchTrace* trace = nullptr) {
  const FeatureMatrix* one[] = {&m};
  auto logits = forward_batch(p, one, mode, trace, mode == nn::Mode::train);
  auto probs = nn::softmax(logits[0]);
  return {std::move(logits[0]), probs};
}

inline ProbPair predict(const TnanetParams& p, const FeatureMatrix& m) {
  // eval mode reads parameters only
  return forward(const_cast<TnanetParams&>(p), m, nn::Mode::eval).second;
}

/// Named activation shapes of an eval-mode pass, in pipeline order.
inline std::vector<std::pair<std::string, Shape>> stage_shapes(const TnanetParams& p, const FeatureMatrix& m) {
  BatchTrace tr;
  forward(const_cast<TnanetParams&>(p), m, nn::Mode::eval, &tr);
  const auto& s = tr.samples[0];
  return {{"dbn", {p.hp.channels, p.hp.hidden2}},
          {"depthwise", s.conv1.shape()},
          {"pool1", s.pool1.shape()},
          {"separable", s.conv2.shape()},
          {"pool2", s.pool2.shape()},
          {"flatten", s.flat.shape()},
          {"logits", s.logits.shape()}};
}

struct FeatureScore {
  std::size_t index = 0;
  std::string name;
  double score = 0.0;
};

/// Mean absolute depthwise weight per input channel, highest first, ties by channel index.
inline std::vector<FeatureScore> feature_importance(const TnanetParams& p, const std::vector<std::string>& names = {}) {
  const std::size_t f = p.hp.filters, d = p.hp.channels;
  std::vector<FeatureScore> out(d);
  for (std::size_t c = 0; c < d; ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < f; ++k) s += std::abs(p.depthwise.value.at(k, c, 0));
    out[c].index = c;
    out[c].name = c < names.size() ? names[c] : detail::concat("ch", c);
    out[c].score = s / static_cast<double>(f);
  }
  std::stable_sort(out.begin(), out.end(), [](const FeatureScore& a, const FeatureScore& b) { return a.score > b.score; });
  return out;
}

}  // namespace tnanet
