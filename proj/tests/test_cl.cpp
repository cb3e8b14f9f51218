#include <gtest/gtest.h>

#include <map>
#include <set>

#include "tnanet/confidence_learning.hpp"

using namespace tnanet;
using namespace tnanet::cl;

namespace {

struct QuietLogs : ::testing::Environment {
  void SetUp() override { Log::quiet() = true; }
};
const auto* const quiet_env = ::testing::AddGlobalTestEnvironment(new QuietLogs);

SamplePrediction pred(std::string id, double p0, int given, Group g = Group::tn) {
  SamplePrediction s;
  s.id = std::move(id);
  s.probs.p = {p0, 1.0 - p0};
  s.given_label = given;
  s.group = g;
  return s;
}

// Random instance with both classes present; probabilities on a coarse grid so ties occur.
std::vector<SamplePrediction> random_instance(Rng& rng, std::size_t n) {
  std::vector<SamplePrediction> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.index(2));
    const double p0 = static_cast<double>(rng.index(11)) / 10.0;
    out.push_back(pred("s" + std::to_string(rng.index(1000)) + "_" + std::to_string(i), p0, y,
                       y == 1 ? Group::tp : Group::tn));
  }
  return out;
}

// --- brute-force references -------------------------------------------------

ClassThresholds brute_thresholds(const std::vector<SamplePrediction>& s) {
  double a = 0, b = 0;
  int na = 0, nb = 0;
  for (const auto& x : s) {
    if (x.given_label == 0) {
      a += x.probs.p[0];
      ++na;
    } else {
      b += x.probs.p[1];
      ++nb;
    }
  }
  return {a / na, b / nb};
}

std::optional<int> brute_label(const SamplePrediction& s, const ClassThresholds& t) {
  std::optional<int> best;
  for (int c = 0; c < 2; ++c) {
    if (s.probs.p[static_cast<std::size_t>(c)] < t[c]) continue;
    if (!best || s.probs.p[static_cast<std::size_t>(c)] > s.probs.p[static_cast<std::size_t>(*best)]) best = c;
  }
  return best;
}

Counts brute_counts(const std::vector<SamplePrediction>& s, const ClassThresholds& t) {
  Counts c{};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (const auto& x : s) {
        auto y = brute_label(x, t);
        if (x.given_label == i && y && *y == j) ++c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    }
  }
  return c;
}

Joint brute_joint(const Counts& c, double x0, double x1) {
  const double x[2] = {x0, x1};
  double raw[2][2] = {};
  for (int i = 0; i < 2; ++i) {
    const double row = static_cast<double>(c[i][0]) + static_cast<double>(c[i][1]);
    for (int j = 0; j < 2; ++j) raw[i][j] = row > 0 ? static_cast<double>(c[i][j]) / row * x[i] : 0.0;
  }
  const double total = raw[0][0] + raw[0][1] + raw[1][0] + raw[1][1];
  Joint q{};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) q[i][j] = total > 0 ? raw[i][j] / total : 0.0;
  }
  return q;
}

// Repeated arg-max selection instead of a sort.
std::vector<std::string> brute_pbnr(std::vector<SamplePrediction> pool, std::size_t n) {
  std::vector<std::string> out;
  n = std::min(n, pool.size());
  while (out.size() < n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const double mi = pool[i].probs.p[1] - pool[i].probs.p[0];
      const double mb = pool[best].probs.p[1] - pool[best].probs.p[0];
      if (mi > mb || (mi == mb && pool[i].id < pool[best].id)) best = i;
    }
    out.push_back(pool[best].id);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return out;
}

}  // namespace

TEST(LabelConfidence, Examples) {
  EXPECT_EQ(label_confidence(pred("a", 0.8, 0)), 0.8);
  EXPECT_NEAR(label_confidence(pred("a", 0.8, 1)), 0.2, 1e-15);
  EXPECT_EQ(label_confidence(pred("a", 0.5, 1)), 0.5);
}

TEST(Thresholds, Examples) {
  std::vector<SamplePrediction> s{pred("a", 0.6, 0), pred("b", 0.8, 0), pred("c", 0.1, 1, Group::tp)};
  auto t = class_thresholds(s);
  EXPECT_NEAR(t.t0, 0.7, 1e-15);
  EXPECT_NEAR(t.t1, 0.9, 1e-15);
  std::vector<SamplePrediction> same{pred("a", 0.5, 0), pred("b", 0.5, 1)};
  t = class_thresholds(same);
  EXPECT_EQ(t.t0, 0.5);
  EXPECT_EQ(t.t1, 0.5);
  EXPECT_THROW(class_thresholds(std::vector<SamplePrediction>{pred("a", 0.5, 0)}), DataError);
}

TEST(EstimatedLabel, Examples) {
  EXPECT_EQ(estimated_label(pred("a", 0.9, 0), {0.7, 0.7}), 0);
  EXPECT_EQ(estimated_label(pred("a", 0.6, 0), {0.7, 0.5}), std::nullopt);
  EXPECT_EQ(estimated_label(pred("a", 0.55, 0), {0.5, 0.4}), 0);
  EXPECT_EQ(estimated_label(pred("a", 0.5, 0), {0.5, 0.5}), 0);
  EXPECT_EQ(estimated_label(pred("a", 0.2, 0), {0.5, 0.5}), 1);
}

TEST(ConfidenceJoint, Examples) {
  std::vector<SamplePrediction> clean{pred("a", 1.0, 0), pred("b", 1.0, 0), pred("c", 0.0, 1), pred("d", 0.0, 1)};
  auto t = class_thresholds(clean);
  auto c = confidence_joint(clean, t);
  EXPECT_EQ(c, (Counts{{{2, 0}, {0, 2}}}));
  EXPECT_EQ(confidence_joint(clean, {1.5, 1.5}), Counts{});
  // one confidently flipped TN among four samples
  std::vector<SamplePrediction> flipped{pred("a", 0.9, 0), pred("b", 0.9, 0), pred("c", 0.05, 0), pred("d", 0.1, 1)};
  t = class_thresholds(flipped);
  c = confidence_joint(flipped, t);
  EXPECT_EQ(c[0][1], 1u);
  EXPECT_EQ(c, brute_counts(flipped, t));
}

TEST(JointDistribution, Examples) {
  auto q = joint_distribution({{{10, 0}, {0, 10}}}, 10, 10);
  EXPECT_EQ(q, (Joint{{{0.5, 0.0}, {0.0, 0.5}}}));
  q = joint_distribution({{{8, 2}, {0, 10}}}, 21, 21);
  EXPECT_NEAR(q[0][0], 0.4, 1e-12);
  EXPECT_NEAR(q[0][1], 0.1, 1e-12);
  EXPECT_EQ(q[1][0], 0.0);
  EXPECT_NEAR(q[1][1], 0.5, 1e-12);
  auto q10 = joint_distribution({{{8, 2}, {0, 10}}}, 210, 210);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(q10[i][j], q[i][j], 1e-15);
  }
  // zero row with members: contributes nothing
  q = joint_distribution({{{0, 0}, {3, 1}}}, 5, 4);
  EXPECT_NEAR(q[1][0], 0.75, 1e-15);
  EXPECT_EQ(q[0][0] + q[0][1], 0.0);
}

TEST(Pbnr, Examples) {
  std::vector<SamplePrediction> pool;
  for (int i = 0; i < 2000; ++i) pool.push_back(pred("u" + std::to_string(i), 0.3 + 0.0003 * i, 0, Group::un));
  Joint q{{{0.5, 0.05}, {0.0, 0.45}}};
  auto r = pbnr_filter(pool, q);
  EXPECT_EQ(r.n_noise, 100u);
  EXPECT_EQ(r.removed.size(), 100u);
  q[0][1] = 0.0;
  EXPECT_TRUE(pbnr_filter(pool, q).removed.empty());

  // margins [-0.8, -0.2, 0.1, 0.4, 0.3]
  std::vector<SamplePrediction> five{pred("a", 0.9, 0), pred("b", 0.6, 0), pred("c", 0.45, 0), pred("d", 0.3, 0),
                                     pred("e", 0.35, 0)};
  auto r5 = pbnr_filter(five, {{{0.6, 0.4}, {0.0, 0.0}}});
  EXPECT_EQ(r5.n_noise, 2u);
  EXPECT_EQ(r5.removed_ids(), (std::vector<std::string>{"d", "e"}));
  EXPECT_EQ(r5.margins.size(), 5u);
}

TEST(Pbnr, RoundingAndClamp) {
  std::vector<SamplePrediction> four;
  for (int i = 0; i < 4; ++i) four.push_back(pred("u" + std::to_string(i), 0.5, 0, Group::un));
  EXPECT_EQ(pbnr_filter(four, {{{0, 0.125}, {0, 0}}}).n_noise, 1u);  // 0.5 rounds away from zero
  EXPECT_EQ(pbnr_filter(four, {{{0, 0.1}, {0, 0}}}).n_noise, 0u);
  auto r = pbnr_filter(four, {{{0, 2.0}, {0, 0}}});
  EXPECT_EQ(r.n_noise, 4u);
  // equal margins: id order
  EXPECT_EQ(pbnr_filter(four, {{{0, 0.5}, {0, 0}}}).removed_ids(), (std::vector<std::string>{"u0", "u1"}));
  EXPECT_THROW(pbnr_filter(std::vector<SamplePrediction>{pred("x", 0.5, 1)}, {}), DataError);
}

TEST(Oracle, RandomInstancesMatchBruteForce) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_instance(rng, 2 + rng.index(19));
    auto t = class_thresholds(s);
    auto bt = brute_thresholds(s);
    EXPECT_EQ(t.t0, bt.t0);
    EXPECT_EQ(t.t1, bt.t1);
    for (const auto& x : s) EXPECT_EQ(estimated_label(x, t), brute_label(x, t));
    auto c = confidence_joint(s, t);
    EXPECT_EQ(c, brute_counts(s, t));
    double x0 = 0, x1 = 0;
    for (const auto& x : s) (x.given_label ? x1 : x0) += 1;
    EXPECT_EQ(joint_distribution(c, x0, x1), brute_joint(c, x0, x1));

    std::vector<SamplePrediction> pool;
    const std::size_t n_un = 1 + rng.index(20);
    for (std::size_t i = 0; i < n_un; ++i) {
      pool.push_back(pred("u" + std::to_string(rng.index(50)) + "_" + std::to_string(i),
                          static_cast<double>(rng.index(11)) / 10.0, 0, Group::un));
    }
    Joint q{{{0.0, rng.uniform(0.0, 0.6)}, {0.0, 0.0}}};
    auto r = pbnr_filter(pool, q);
    EXPECT_EQ(r.n_noise, static_cast<std::size_t>(std::llround(static_cast<double>(n_un) * q[0][1])));
    EXPECT_EQ(r.removed_ids(), brute_pbnr(pool, r.n_noise));

    // removed confidences never exceed retained ones
    const auto ids = r.removed_ids();
    std::set<std::string> removed(ids.begin(), ids.end());
    for (const auto& a : pool) {
      if (!removed.count(a.id)) continue;
      for (const auto& b : pool) {
        if (removed.count(b.id)) continue;
        EXPECT_LE(label_confidence(a), label_confidence(b));
      }
    }
  }
}

TEST(Oracle, JointInvariances) {
  Rng rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    Counts c{{{1 + rng.index(9), rng.index(9)}, {rng.index(9), 1 + rng.index(9)}}};
    const double x0 = 1 + static_cast<double>(rng.index(40)), x1 = 1 + static_cast<double>(rng.index(40));
    auto q = joint_distribution(c, x0, x1);
    EXPECT_NEAR(q[0][0] + q[0][1] + q[1][0] + q[1][1], 1.0, 1e-9);
    auto scaled = joint_distribution(c, 7 * x0, 7 * x1);
    const std::size_t k = 1 + rng.index(5);
    Counts c2 = c;
    c2[1][0] *= k;
    c2[1][1] *= k;
    auto rowscaled = joint_distribution(c2, x0, x1);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        EXPECT_NEAR(scaled[i][j], q[i][j], 1e-12);
        EXPECT_NEAR(rowscaled[i][j], q[i][j], 1e-12);
        EXPECT_GE(q[i][j], 0.0);
      }
    }
  }
}

TEST(Oracle, NullRateMonotoneInThresholds) {
  Rng rng(44);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_instance(rng, 20);
    ClassThresholds lo{rng.uniform(), rng.uniform()};
    ClassThresholds hi{lo.t0 + rng.uniform(0, 0.3), lo.t1 + rng.uniform(0, 0.3)};
    int nl = 0, nh = 0;
    for (const auto& x : s) {
      nl += !estimated_label(x, lo).has_value();
      nh += !estimated_label(x, hi).has_value();
    }
    EXPECT_GE(nh, nl);
  }
}

TEST(SymmetricFilter, RemovesLowestConfidenceOfEitherLabel) {
  std::vector<SamplePrediction> s{pred("a", 0.9, 0), pred("b", 0.2, 0), pred("c", 0.3, 1), pred("d", 0.95, 1),
                                  pred("e", 0.5, 0)};
  // confidences 0.9, 0.2, 0.7, 0.05, 0.5; |pool|*(0.2+0.2) = 2
  auto r = pbnr_filter_symmetric(s, {{{0.3, 0.2}, {0.2, 0.3}}});
  EXPECT_EQ(r.removed_ids(), (std::vector<std::string>{"d", "b"}));
}

TEST(NoiseReport, Format) {
  auto dir = std::filesystem::temp_directory_path() / "tnanet_cl_report";
  std::filesystem::create_directories(dir);
  std::vector<SamplePrediction> five{pred("a", 0.9, 0), pred("d", 0.3, 0)};
  auto r = pbnr_filter(five, {{{0.5, 0.5}, {0, 0}}});
  JointDistribution j;
  j.counts = {{{1, 1}, {0, 2}}};
  j.q = {{{0.25, 0.25}, {0, 0.5}}};
  write_noise_report(dir / "noise.txt", r, j, {0.6, 0.7});
  std::ifstream in(dir / "noise.txt");
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(all,
            "thresholds 0.6 0.7\ncounts 1 1 0 2\njoint 0.25 0.25 0 0.5\ncandidates 2\nn_noise 1\n"
            "# id margin label_confidence\nd 0.39999999999999997 0.3\n");
  std::filesystem::remove_all(dir);
}
