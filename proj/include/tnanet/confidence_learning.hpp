#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tnanet/feature_matrix.hpp"
#include "tnanet/prob_pair.hpp"

namespace tnanet::cl {

enum class Group { tp, tn, un };

inline const char* group_name(Group g) { return g == Group::tp ? "TP" : (g == Group::tn ? "TN" : "UN"); }

struct SamplePrediction {
  std::string id;
  ProbPair probs;
  int given_label = 0;
  Group group = Group::un;
};

struct ClassThresholds {
  double t0 = 0.0;
  double t1 = 0.0;
  double operator[](int c) const { return c == 0 ? t0 : t1; }
};

using Counts = std::array<std::array<std::size_t, 2>, 2>;
using Joint = std::array<std::array<double, 2>, 2>;

struct JointDistribution {
  Counts counts{};
  Joint q{};
};

struct RemovedSample {
  std::string id;
  double margin = 0.0;      // p[1] - p[0]
  double confidence = 0.0;  // probability of the given label
};

struct NoiseFilterResult {
  std::vector<RemovedSample> removed;
  std::size_t n_noise = 0;
  std::vector<std::pair<std::string, double>> margins;  // every candidate, input order

  std::vector<std::string> removed_ids() const {
    std::vector<std::string> out;
    for (const auto& r : removed) out.push_back(r.id);
    return out;
  }
};

inline double label_confidence(const SamplePrediction& s) { return s.probs.p[static_cast<std::size_t>(s.given_label)]; }

/// Mean label confidence per given class.
inline ClassThresholds class_thresholds(std::span<const SamplePrediction> preds) {
  std::array<double, 2> sum{0.0, 0.0};
  std::array<std::size_t, 2> n{0, 0};
  for (const auto& s : preds) {
    sum[static_cast<std::size_t>(s.given_label)] += label_confidence(s);
    ++n[static_cast<std::size_t>(s.given_label)];
  }
  for (int c = 0; c < 2; ++c) {
    if (n[static_cast<std::size_t>(c)] == 0) {
      throw DataError(detail::concat("class_thresholds: no samples with given label ", c));
    }
  }
  return {sum[0] / static_cast<double>(n[0]), sum[1] / static_cast<double>(n[1])};
}

/// Class whose probability reaches its threshold; null when none does, the
/// larger probability when both do (ties to 0).
inline std::optional<int> estimated_label(const SamplePrediction& s, const ClassThresholds& t) {
  const bool c0 = s.probs.p[0] >= t.t0;
  const bool c1 = s.probs.p[1] >= t.t1;
  if (!c0 && !c1) return std::nullopt;
  if (c0 && !c1) return 0;
  if (c1 && !c0) return 1;
  return s.probs.p[0] >= s.probs.p[1] ? 0 : 1;
}

inline Counts confidence_joint(std::span<const SamplePrediction> preds, const ClassThresholds& t) {
  Counts c{};
  for (const auto& s : preds) {
    if (auto y = estimated_label(s, t)) ++c[static_cast<std::size_t>(s.given_label)][static_cast<std::size_t>(*y)];
  }
  return c;
}

/// Row-normalized counts, each row scaled by its class size, renormalized to sum 1.
inline Joint joint_distribution(const Counts& c, double x0, double x1) {
  Joint q{};
  const std::array<double, 2> x{x0, x1};
  double total = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const double row = static_cast<double>(c[i][0] + c[i][1]);
    if (row == 0.0) {
      if (x[i] > 0.0) Log::warn("joint_distribution: no confident samples with given label ", i, "; row contributes 0");
      continue;
    }
    for (std::size_t j = 0; j < 2; ++j) {
      q[i][j] = static_cast<double>(c[i][j]) / row * x[i];
      total += q[i][j];
    }
  }
  if (total > 0.0) {
    for (auto& row : q) {
      for (auto& v : row) v /= total;
    }
  } else {
    Log::warn("joint_distribution: every confident count is zero; joint left at 0");
  }
  return q;
}

/// Thresholds, confident joint and normalized joint from one prediction set;
/// class sizes are the given-label counts of that set.
inline JointDistribution estimate_joint(std::span<const SamplePrediction> preds, ClassThresholds* thresholds = nullptr) {
  const auto t = class_thresholds(preds);
  if (thresholds) *thresholds = t;
  JointDistribution out;
  out.counts = confidence_joint(preds, t);
  double x0 = 0.0, x1 = 0.0;
  for (const auto& s : preds) (s.given_label == 0 ? x0 : x1) += 1.0;
  out.q = joint_distribution(out.counts, x0, x1);
  return out;
}

namespace detail_cl {

inline std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

// Removes the n_noise candidates with the smallest key, ties by id ascending.
template <typename Key>
NoiseFilterResult remove_lowest(std::span<const SamplePrediction> cands, std::size_t n_noise, Key key) {
  NoiseFilterResult res;
  for (const auto& s : cands) res.margins.emplace_back(s.id, s.probs.p[1] - s.probs.p[0]);
  if (n_noise > cands.size()) {
    Log::warn("noise filter: estimated ", n_noise, " noisy samples but only ", cands.size(), " candidates; clamping");
    n_noise = cands.size();
  }
  res.n_noise = n_noise;
  std::vector<std::size_t> order(cands.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ca = key(cands[a]), cb = key(cands[b]);
    if (ca != cb) return ca < cb;
    return cands[a].id < cands[b].id;
  });
  for (std::size_t k = 0; k < n_noise; ++k) {
    const auto& s = cands[order[k]];
    res.removed.push_back({s.id, s.probs.p[1] - s.probs.p[0], label_confidence(s)});
  }
  return res;
}

}  // namespace detail_cl

/// Prune by noise rate over a negatively labelled pool: removes
/// round(|pool| * Q[0][1]) samples with the largest margin p[1] - p[0],
/// ties by id ascending.
inline NoiseFilterResult pbnr_filter(std::span<const SamplePrediction> un_preds, const Joint& q) {
  for (const auto& s : un_preds) {
    if (s.given_label != 0) throw DataError("pbnr_filter: candidate " + s.id + " does not carry a negative label");
  }
  return detail_cl::remove_lowest(un_preds, detail_cl::round_count(static_cast<double>(un_preds.size()) * q[0][1]),
                                  [](const SamplePrediction& s) { return -(s.probs.p[1] - s.probs.p[0]); });
}

/// Two-sided variant for symmetric noise: candidates of either given label,
/// round(|pool| * (Q[0][1] + Q[1][0])) lowest label-confidence samples removed.
inline NoiseFilterResult pbnr_filter_symmetric(std::span<const SamplePrediction> preds, const Joint& q) {
  return detail_cl::remove_lowest(preds, detail_cl::round_count(static_cast<double>(preds.size()) * (q[0][1] + q[1][0])),
                                  [](const SamplePrediction& s) { return label_confidence(s); });
}

inline void write_noise_report(const std::filesystem::path& path, const NoiseFilterResult& r,
                               const JointDistribution& j, const ClassThresholds& t) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "thresholds " << format_double(t.t0) << ' ' << format_double(t.t1) << '\n';
  out << "counts " << j.counts[0][0] << ' ' << j.counts[0][1] << ' ' << j.counts[1][0] << ' ' << j.counts[1][1] << '\n';
  out << "joint " << format_double(j.q[0][0]) << ' ' << format_double(j.q[0][1]) << ' ' << format_double(j.q[1][0])
      << ' ' << format_double(j.q[1][1]) << '\n';
  out << "candidates " << r.margins.size() << '\n';
  out << "n_noise " << r.n_noise << '\n';
  out << "# id margin label_confidence\n";
  for (const auto& s : r.removed) {
    out << s.id << ' ' << format_double(s.margin) << ' ' << format_double(s.confidence) << '\n';
  }
}

}  // namespace tnanet::cl
