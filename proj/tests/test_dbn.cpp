#include <gtest/gtest.h>

#include "tnanet/dbn.hpp"
#include "tnanet/gradient_check.hpp"

using namespace tnanet;

namespace {

RbmLayer layer_from(std::size_t in, std::size_t out, std::vector<double> w, std::vector<double> b = {},
                    std::vector<double> bs = {}) {
  RbmLayer l(in, out);
  l.weight.value = Tensor({out, in}, std::move(w));
  if (!b.empty()) l.bias.value = Tensor({out}, std::move(b));
  if (!bs.empty()) l.bias_back.value = Tensor({in}, std::move(bs));
  return l;
}

FeatureMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  FeatureMatrix m(r, c);
  for (auto& v : m.values) v = rng.uniform();
  return m;
}

}  // namespace

TEST(RbmForward, Examples) {
  std::vector<double> v{0.3, -1.2};
  auto zero = rbm_forward(RbmLayer(2, 3), v);
  for (double x : zero) EXPECT_EQ(x, 0.0);
  auto ident = rbm_forward(layer_from(2, 2, {1, 0, 0, 1}), v);
  EXPECT_EQ(ident, v);
  auto hand = rbm_forward(layer_from(2, 2, {1, 2, 3, 4}, {1, 1}), std::vector<double>{1, 1});
  EXPECT_EQ(hand, (std::vector<double>{4, 8}));
  EXPECT_THROW(rbm_forward(RbmLayer(3, 2), v), DimensionError);
}

TEST(RbmReconstruct, Examples) {
  auto zero = rbm_reconstruct(RbmLayer(4, 3), std::vector<double>(3, 0.0));
  for (double x : zero) EXPECT_EQ(x, 0.0);
  // rotation matrix: transpose is the inverse
  const double a = 0.7;
  auto rot = layer_from(2, 2, {std::cos(a), -std::sin(a), std::sin(a), std::cos(a)});
  std::vector<double> v{0.25, -3.0};
  auto back = rbm_reconstruct(rot, rbm_forward(rot, v));
  EXPECT_NEAR(back[0], v[0], 1e-10);
  EXPECT_NEAR(back[1], v[1], 1e-10);
  // 3 -> 2 layer, W = [[1,0,1],[0,2,1]]: W^T [1,1] = [1,2,2]
  auto l = layer_from(3, 2, {1, 0, 1, 0, 2, 1});
  EXPECT_EQ(rbm_reconstruct(l, std::vector<double>{1, 1}), (std::vector<double>{1, 2, 2}));
  EXPECT_THROW(rbm_reconstruct(l, std::vector<double>{1, 1, 1}), DimensionError);
}

TEST(ReconstructionLoss, Examples) {
  std::vector<double> v{1, 2};
  EXPECT_EQ(reconstruction_loss(v, v), 0.0);
  EXPECT_EQ(reconstruction_loss(v, std::vector<double>{0, 4}), 3.0);
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(1 + rng.index(30)), b(a.size());
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    double brute = 0;
    for (std::size_t i = 0; i < a.size(); ++i) brute += a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
    EXPECT_EQ(reconstruction_loss(a, b), brute);
    EXPECT_GE(reconstruction_loss(a, b), 0.0);
  }
}

TEST(ReconstructionLoss, ZeroIffPerfectReconstruction) {
  auto l = layer_from(2, 2, {1, 0, 0, 1});
  std::vector<double> v{0.4, 0.9};
  EXPECT_EQ(reconstruction_loss(v, rbm_reconstruct(l, rbm_forward(l, v))), 0.0);
  auto skew = layer_from(2, 2, {1, 0, 0, 2});
  EXPECT_GT(reconstruction_loss(v, rbm_reconstruct(skew, rbm_forward(skew, v))), 0.0);
}

TEST(EncoderWidths, Ratio) {
  EXPECT_EQ(encoder_widths(70), (std::pair<std::size_t, std::size_t>{50, 25}));
  EXPECT_EQ(encoder_widths(896), (std::pair<std::size_t, std::size_t>{50, 25}));
  EXPECT_EQ(encoder_widths(50), (std::pair<std::size_t, std::size_t>{36, 18}));
  EXPECT_EQ(encoder_widths(5), (std::pair<std::size_t, std::size_t>{8, 4}));
}

TEST(DbnEncode, PpgShapeAndZeros) {
  Rng rng(1);
  auto stacks = make_dbn(38, 70, 50, 25, rng);
  auto m = random_matrix(38, 70, rng);
  auto h = dbn_encode(stacks, m);
  EXPECT_EQ(h.shape(), (Shape{38, 25}));
  std::vector<DbnStack> zero;
  for (std::size_t c = 0; c < 38; ++c) zero.emplace_back(c, 70, 50, 25);
  auto hz = dbn_encode(zero, m);
  for (double v : hz.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(dbn_encode(stacks, FeatureMatrix(37, 70)), DimensionError);
}

TEST(DbnEncode, HandChain) {
  // 2 -> 2 -> 1: layer1 W=[[1,1],[0,2]] b=[1,0]; layer2 W=[[3,-1]] b=[0.5]
  std::vector<DbnStack> stacks(1);
  stacks[0].layers[0] = layer_from(2, 2, {1, 1, 0, 2}, {1, 0});
  stacks[0].layers[1] = layer_from(2, 1, {3, -1}, {0.5});
  FeatureMatrix m(1, 2);
  m.values = {2, 3};
  // h1 = [6, 6], h2 = 18 - 6 + 0.5
  EXPECT_EQ(dbn_encode(stacks, m)[0], 12.5);
}

TEST(DbnEncode, LinearWithZeroBiases) {
  Rng rng(2);
  auto stacks = make_dbn(5, 12, 8, 4, rng);
  auto m = random_matrix(5, 12, rng);
  const double a = -2.75;
  FeatureMatrix scaled = m;
  for (auto& v : scaled.values) v *= a;
  auto h = dbn_encode(stacks, m), hs = dbn_encode(stacks, scaled);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(hs[i], a * h[i], 1e-9);
}

TEST(DbnEncode, ChannelsAreIndependent) {
  Rng rng(3);
  auto stacks = make_dbn(6, 10, 8, 4, rng);
  for (auto& s : stacks) {
    for (auto& l : s.layers) {
      for (auto& v : l.bias.value.values()) v = rng.normal();
    }
  }
  auto m = random_matrix(6, 10, rng);
  auto base = dbn_encode(stacks, m);
  for (std::size_t j = 0; j < 6; ++j) {
    auto p = m;
    for (auto& v : p.row(j)) v += rng.normal();
    auto h = dbn_encode(stacks, p);
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t k = 0; k < 4; ++k) {
        if (r == j) continue;
        EXPECT_EQ(h.at(r, k), base.at(r, k));
      }
    }
  }
}

TEST(DbnTraining, ReconstructionGradientMatchesFiniteDifferences) {
  for (Activation act : {Activation::linear, Activation::sigmoid}) {
    Rng rng(4);
    RbmLayer l(9, 5);
    l.init(rng);
    for (auto& v : l.bias.value.values()) v = rng.normal(0, 0.1);
    for (auto& v : l.bias_back.value.values()) v = rng.normal(0, 0.1);
    std::vector<double> v(9);
    for (auto& x : v) x = rng.uniform();
    ParamSet ps;
    ps.add("weight", l.weight);
    ps.add("bias", l.bias);
    ps.add("bias_back", l.bias_back);
    auto loss = [&](bool with_grad) {
      if (with_grad) return rbm_reconstruction_step(l, v, act);
      return reconstruction_loss(v, rbm_reconstruct(l, rbm_forward(l, v, act), act));
    };
    auto rep = gradient_check(ps, loss, {});
    EXPECT_TRUE(rep.passed) << rep.max_relative_error;
  }
}

TEST(DbnTraining, LossDecreasesOverEpochs) {
  double first = 0, last = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto stacks = make_dbn(4, 20, 14, 7, rng);
    std::vector<FeatureMatrix> data;
    for (int i = 0; i < 30; ++i) data.push_back(random_matrix(4, 20, rng));
    SelfSupervisedOptions opt;
    opt.seed = seed;
    auto rep = self_supervised_train(stacks, data, opt);
    ASSERT_EQ(rep.epoch_loss[0].size(), 3u);
    ASSERT_EQ(rep.epoch_loss[1].size(), 3u);
    first += rep.epoch_loss[0].front();
    last += rep.epoch_loss[0].back();
  }
  EXPECT_LE(last / 10, first / 10);
}

TEST(DbnTraining, ZeroVarianceChannelStaysFinite) {
  Rng rng(6);
  auto stacks = make_dbn(2, 16, 11, 5, rng);
  std::vector<FeatureMatrix> data;
  for (int i = 0; i < 20; ++i) {
    auto m = random_matrix(2, 16, rng);
    for (auto& v : m.row(1)) v = 0.5;
    data.push_back(m);
  }
  auto rep = self_supervised_train(stacks, data, {});
  for (auto& per_layer : rep.epoch_loss) {
    for (double v : per_layer) EXPECT_TRUE(std::isfinite(v));
  }
  for (auto& s : stacks) {
    for (auto& l : s.layers) {
      EXPECT_TRUE(l.weight.value.all_finite());
      EXPECT_TRUE(l.bias_back.value.all_finite());
    }
  }
}

TEST(DbnTraining, SeededRunsAreIdentical) {
  auto run = [] {
    Rng rng(7);
    auto stacks = make_dbn(3, 10, 8, 4, rng);
    std::vector<FeatureMatrix> data;
    for (int i = 0; i < 8; ++i) data.push_back(random_matrix(3, 10, rng));
    SelfSupervisedOptions opt;
    opt.seed = 99;
    self_supervised_train(stacks, data, opt);
    return stacks;
  };
  auto a = run(), b = run();
  for (std::size_t c = 0; c < a.size(); ++c) {
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(a[c].layers[k].weight.value, b[c].layers[k].weight.value);
      EXPECT_EQ(a[c].layers[k].bias.value, b[c].layers[k].bias.value);
    }
  }
}
