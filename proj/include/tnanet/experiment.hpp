#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "tnanet/confidence_learning.hpp"
#include "tnanet/model.hpp"

namespace tnanet::exp {

using cl::Group;

/// Samples keyed by id. `label` is the given label; for public data it is the
/// clean label. `truth` is optional ground truth known only to generators.
struct Dataset {
  std::vector<std::string> ids;  // sorted
  std::map<std::string, FeatureMatrix> x;
  std::map<std::string, int> label;
  std::map<std::string, Group> group;
  std::map<std::string, int> truth;
  std::vector<std::string> feature_names;

  void add(const std::string& id, FeatureMatrix m, int given, Group g = Group::tn, std::optional<int> true_label = {}) {
    if (x.count(id)) throw DataError("duplicate sample id " + id);
    if (given != 0 && given != 1) throw DataError(detail::concat("sample ", id, ": label ", given, " not in {0, 1}"));
    if (!x.empty()) {
      const auto& first = x.begin()->second;
      if (m.rows != first.rows || m.cols != first.cols) {
        throw DataError(detail::concat("sample ", id, " is ", m.rows, "x", m.cols, ", others are ", first.rows, "x",
                                       first.cols));
      }
    }
    ids.insert(std::upper_bound(ids.begin(), ids.end(), id), id);
    x.emplace(id, std::move(m));
    label[id] = given;
    group[id] = g;
    if (true_label) truth[id] = *true_label;
  }

  std::size_t size() const { return ids.size(); }
  std::size_t channels() const { return x.empty() ? 0 : x.begin()->second.rows; }
  std::size_t length() const { return x.empty() ? 0 : x.begin()->second.cols; }

  std::vector<std::string> ids_in(Group g) const {
    std::vector<std::string> out;
    for (const auto& id : ids) {
      if (group.at(id) == g) out.push_back(id);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;
};

inline Metrics metrics(std::span<const int> truth, std::span<const int> pred) {
  if (truth.empty() || truth.size() != pred.size()) throw DataError("metrics: need equal, non-empty label lists");
  std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    correct += truth[i] == pred[i];
    tp += truth[i] == 1 && pred[i] == 1;
    fp += truth[i] == 0 && pred[i] == 1;
    fn += truth[i] == 1 && pred[i] == 0;
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  if (tp == 0) {
    Log::warn("metrics: no true positives, F1 set to 0");
    m.f1 = 0.0;
  } else {
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = 2.0 * precision * recall / (precision + recall);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Label noise

struct NoiseInjection {
  std::map<std::string, int> labels;  // every input id, after corruption
  std::vector<std::string> flipped;   // ids whose label changed, sorted
};

/// Flips the labels of round(ratio * n) uniformly chosen ids. The shuffle
/// variant permutes the labels of the chosen ids among themselves instead.
inline NoiseInjection inject_symmetric_noise(const std::vector<std::string>& ids, const std::map<std::string, int>& labels,
                                             double ratio, std::uint64_t seed, bool shuffle = false) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError(detail::concat("noise ratio ", ratio, " outside [0, 1]"));
  NoiseInjection out;
  for (const auto& id : ids) out.labels[id] = labels.at(id);
  const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ids.size())));
  std::vector<std::string> chosen = ids;
  Rng rng(seed);
  rng.shuffle(chosen);
  chosen.resize(k);
  if (shuffle) {
    std::vector<int> vals;
    for (const auto& id : chosen) vals.push_back(out.labels[id]);
    rng.shuffle(vals);
    for (std::size_t i = 0; i < k; ++i) out.labels[chosen[i]] = vals[i];
  } else {
    for (const auto& id : chosen) out.labels[id] = 1 - out.labels[id];
  }
  for (const auto& id : ids) {
    if (out.labels[id] != labels.at(id)) out.flipped.push_back(id);
  }
  std::sort(out.flipped.begin(), out.flipped.end());
  return out;
}

// ---------------------------------------------------------------------------
// Fold plans

struct FoldPlan {
  std::size_t index = 0;
  bool scored = true;  // counted in the headline metrics; coverage folds only feed predictions
  std::vector<std::pair<std::string, int>> train;  // id, training label
  std::vector<std::string> test_ids;
  std::vector<std::string> heldout_ids;
  std::vector<std::string> noisy_ids;  // training ids drawn from the noisy segment
  std::uint64_t seed = 0;

  bool trains_on(const std::string& id) const {
    return std::any_of(train.begin(), train.end(), [&](const auto& e) { return e.first == id; });
  }
};

inline std::uint64_t fold_seed(std::uint64_t seed, std::size_t k) { return derive_seed(seed, {tag_of("fold"), k}); }

struct PpgFoldSpec {
  std::size_t n_folds = 5;
  std::size_t test_tp = 6;
  std::size_t test_tn = 6;
  std::size_t train_un = 6;
  std::size_t heldout = 3;
};

/// Seeded orderings from which PPG folds are cut.
struct PpgLayout {
  PpgFoldSpec spec;
  std::vector<std::string> tp;        // shuffled, held-out ids removed
  std::vector<std::string> tn;        // shuffled
  std::vector<std::string> un_order;  // shuffled stage-one pool
  std::set<std::string> un_allowed;   // pool of the current stage
  std::vector<std::string> heldout;
  std::uint64_t seed = 0;
};

/// Held-out positives of repetition r: a window of a seeded permutation, so
/// repetitions rotate through disjoint triples.
inline std::vector<std::string> choose_heldout(const Dataset& d, std::size_t repetition, std::size_t count,
                                               std::uint64_t seed) {
  auto tp = d.ids_in(Group::tp);
  if (count == 0) return {};
  if (tp.size() <= count) throw DataError(detail::concat("cannot hold out ", count, " of ", tp.size(), " TP samples"));
  Rng rng(derive_seed(seed, {tag_of("heldout")}));
  rng.shuffle(tp);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(tp[(repetition * count + i) % tp.size()]);
  std::sort(out.begin(), out.end());
  return out;
}

inline PpgLayout ppg_layout(const Dataset& d, const std::vector<std::string>& heldout, const PpgFoldSpec& spec,
                            std::uint64_t seed) {
  PpgLayout L;
  L.spec = spec;
  L.seed = seed;
  L.heldout = heldout;
  std::set<std::string> held(heldout.begin(), heldout.end());
  for (const auto& id : d.ids_in(Group::tp)) {
    if (!held.count(id)) L.tp.push_back(id);
  }
  L.tn = d.ids_in(Group::tn);
  L.un_order = d.ids_in(Group::un);
  L.un_allowed.insert(L.un_order.begin(), L.un_order.end());
  if (L.tp.size() <= spec.test_tp || L.tn.size() <= spec.test_tn || L.un_order.size() < spec.train_un) {
    throw DataError(detail::concat("fold quota infeasible: ", L.tp.size(), " TP (need > ", spec.test_tp, "), ",
                                   L.tn.size(), " TN (need > ", spec.test_tn, "), ", L.un_order.size(), " UN (need ",
                                   spec.train_un, ")"));
  }
  Rng rng(derive_seed(seed, {tag_of("ppg-folds")}));
  rng.shuffle(L.tp);
  rng.shuffle(L.tn);
  rng.shuffle(L.un_order);
  return L;
}

/// Fold k: a rotating window of 6 TP and 6 TN for test, the rest of TP/TN plus
/// the next 6 allowed UN ids (walking the pool order from 6k) for training.
inline FoldPlan ppg_fold(const PpgLayout& L, std::size_t k) {
  const auto& s = L.spec;
  if (L.un_allowed.size() < s.train_un) {
    throw DataError(detail::concat("fold quota infeasible: ", L.un_allowed.size(), " UN left, ", s.train_un, " needed"));
  }
  FoldPlan f;
  f.index = k;
  f.scored = k < s.n_folds;
  f.seed = fold_seed(L.seed, k);
  f.heldout_ids = L.heldout;
  auto window = [&](const std::vector<std::string>& v, std::size_t n, int label) {
    std::set<std::size_t> test_pos;
    for (std::size_t i = 0; i < n; ++i) test_pos.insert((k * n + i) % v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (test_pos.count(i)) {
        f.test_ids.push_back(v[i]);
      } else {
        f.train.emplace_back(v[i], label);
      }
    }
  };
  window(L.tp, s.test_tp, 1);
  window(L.tn, s.test_tn, 0);
  std::size_t taken = 0;
  for (std::size_t step = 0; step < L.un_order.size() && taken < s.train_un; ++step) {
    const auto& id = L.un_order[(k * s.train_un + step) % L.un_order.size()];
    if (L.un_allowed.count(id)) {
      f.train.emplace_back(id, 0);
      ++taken;
    }
  }
  std::sort(f.test_ids.begin(), f.test_ids.end());
  std::sort(f.train.begin(), f.train.end());
  return f;
}

inline std::vector<FoldPlan> split_folds_ppg(const PpgLayout& L) {
  std::vector<FoldPlan> out;
  for (std::size_t k = 0; k < L.spec.n_folds; ++k) out.push_back(ppg_fold(L, k));
  return out;
}

/// Ninths of a seeded shuffle, with one noisy relabelling per ninth fixed for the run.
struct PublicLayout {
  std::vector<std::vector<std::string>> ninths;
  std::map<std::string, int> clean;
  std::map<std::string, int> noisy;
  std::vector<std::string> flipped;
  std::size_t n_folds = 5;
  std::uint64_t seed = 0;
};

inline PublicLayout public_layout(const Dataset& d, std::size_t n_folds, double ratio, std::uint64_t seed,
                                  bool shuffle_noise = false) {
  if (d.size() < 9) throw DataError(detail::concat("public mode needs at least 9 samples, got ", d.size()));
  if (n_folds == 0 || n_folds > 9) throw ConfigError(detail::concat("n_folds ", n_folds, " outside [1, 9]"));
  PublicLayout L;
  L.n_folds = n_folds;
  L.seed = seed;
  std::vector<std::string> order = d.ids;
  Rng rng(derive_seed(seed, {tag_of("public-folds")}));
  rng.shuffle(order);
  const std::size_t n = order.size();
  for (std::size_t j = 0; j < 9; ++j) {
    L.ninths.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(j * n / 9),
                          order.begin() + static_cast<std::ptrdiff_t>((j + 1) * n / 9));
  }
  L.clean = d.label;
  for (std::size_t j = 0; j < 9; ++j) {
    auto inj = inject_symmetric_noise(L.ninths[j], d.label, ratio, derive_seed(seed, {tag_of("noise"), j}), shuffle_noise);
    for (const auto& [id, y] : inj.labels) L.noisy[id] = y;
    L.flipped.insert(L.flipped.end(), inj.flipped.begin(), inj.flipped.end());
  }
  std::sort(L.flipped.begin(), L.flipped.end());
  return L;
}

/// Fold k: test = ninth k, clean = ninths k+1..k+4, noisy = ninths k+5..k+8.
/// Ids in `removed` are dropped from the noisy segment.
inline FoldPlan public_fold(const PublicLayout& L, std::size_t k, const std::set<std::string>& removed = {}) {
  FoldPlan f;
  f.index = k;
  f.scored = k < L.n_folds;
  f.seed = fold_seed(L.seed, k);
  f.test_ids = L.ninths[k % 9];
  for (std::size_t j = 1; j <= 4; ++j) {
    for (const auto& id : L.ninths[(k + j) % 9]) f.train.emplace_back(id, L.clean.at(id));
  }
  for (std::size_t j = 5; j <= 8; ++j) {
    for (const auto& id : L.ninths[(k + j) % 9]) {
      if (removed.count(id)) continue;
      f.train.emplace_back(id, L.noisy.at(id));
      f.noisy_ids.push_back(id);
    }
  }
  std::sort(f.test_ids.begin(), f.test_ids.end());
  std::sort(f.train.begin(), f.train.end());
  std::sort(f.noisy_ids.begin(), f.noisy_ids.end());
  return f;
}

inline std::vector<FoldPlan> split_folds_public(const PublicLayout& L, const std::set<std::string>& removed = {}) {
  std::vector<FoldPlan> out;
  for (std::size_t k = 0; k < L.n_folds; ++k) out.push_back(public_fold(L, k, removed));
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validated stage

enum class SelfSupervision { training_set, un_only, disabled };

inline const char* condition_name(SelfSupervision s) {
  switch (s) {
    case SelfSupervision::training_set: return "With Entire Training Set";
    case SelfSupervision::un_only: return "With UN Samples";
    case SelfSupervision::disabled: return "Without the Phase";
  }
  return "";
}

struct StageOptions {
  HyperParams hp;
  SelfSupervision ssl = SelfSupervision::training_set;
  std::size_t ssl_epochs = 3;
  std::size_t jobs = 1;
  std::size_t max_folds = 0;  // coverage cap; 0 means 4 * scored folds
};

struct Accumulated {
  double sum0 = 0.0;
  double sum1 = 0.0;
  std::size_t count = 0;

  ProbPair mean() const {
    ProbPair p;
    p.p = {sum0 / static_cast<double>(count), sum1 / static_cast<double>(count)};
    return p;
  }
};

struct FoldOutcome {
  FoldPlan plan;
  Metrics metrics;
  TrainReport train;
  SelfSupervisedReport ssl;
  std::vector<std::pair<std::string, ProbPair>> predictions;  // every id outside the training set, sorted
  TnanetParams model;
};

struct StageSummary {
  double acc_mean = 0.0, acc_std = 0.0, f1_mean = 0.0, f1_std = 0.0;
  std::size_t folds = 0;
};

struct CvResult {
  int stage = 1;
  std::vector<FoldOutcome> folds;
  std::map<std::string, Accumulated> accumulated;

  ProbPair averaged(const std::string& id) const {
    auto it = accumulated.find(id);
    if (it == accumulated.end() || it->second.count == 0) throw Error("no accumulated prediction for " + id);
    return it->second.mean();
  }

  /// Mean and population standard deviation over the scored folds.
  StageSummary summary() const {
    StageSummary s;
    std::vector<double> a, f;
    for (const auto& fo : folds) {
      if (!fo.plan.scored) continue;
      a.push_back(fo.metrics.accuracy);
      f.push_back(fo.metrics.f1);
    }
    s.folds = a.size();
    if (a.empty()) return s;
    auto ms = [](const std::vector<double>& v, double& mean, double& sd) {
      mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = std::sqrt(ss / static_cast<double>(v.size()));
    };
    ms(a, s.acc_mean, s.acc_std);
    ms(f, s.f1_mean, s.f1_std);
    return s;
  }
};

/// Trains and evaluates one fold.
inline FoldOutcome run_fold(const Dataset& d, const FoldPlan& plan, const StageOptions& opt) {
  FoldOutcome out;
  out.plan = plan;
  out.model = TnanetParams::initialized(opt.hp, plan.seed);
  std::vector<TrainingExample> train;
  std::vector<FeatureMatrix> ssl_data;
  std::set<std::string> noisy(plan.noisy_ids.begin(), plan.noisy_ids.end());
  for (const auto& [id, y] : plan.train) {
    train.push_back({&d.x.at(id), y});
    bool use = opt.ssl == SelfSupervision::training_set;
    if (opt.ssl == SelfSupervision::un_only) {
      // public data has no UN group; its noisy segment plays that role
      use = plan.noisy_ids.empty() ? d.group.at(id) == Group::un : noisy.count(id) > 0;
    }
    if (use) ssl_data.push_back(d.x.at(id));
  }
  if (!ssl_data.empty() && opt.ssl != SelfSupervision::disabled) {
    SelfSupervisedOptions so;
    so.epochs = opt.ssl_epochs;
    so.lr = opt.hp.lr;
    so.activation = opt.hp.activation;
    so.seed = derive_seed(plan.seed, {tag_of("ssl")});
    out.ssl = self_supervised_train(out.model.dbn, ssl_data, so);
  }
  out.train = supervised_train(out.model, train);
  std::set<std::string> in_train;
  for (const auto& e : plan.train) in_train.insert(e.first);
  for (const auto& id : d.ids) {
    if (!in_train.count(id)) out.predictions.emplace_back(id, predict(out.model, d.x.at(id)));
  }
  std::vector<int> truth, pred;
  for (const auto& id : plan.test_ids) {
    truth.push_back(d.label.at(id));
    auto it = std::lower_bound(out.predictions.begin(), out.predictions.end(), id,
                               [](const auto& e, const std::string& key) { return e.first < key; });
    pred.push_back(predict_label(it->second));
  }
  if (!truth.empty()) out.metrics = metrics(truth, pred);
  return out;
}

/// Runs folds 0..n-1, then further folds until every sample has at least one
/// out-of-training prediction. Which folds run depends only on the plans, so
/// results do not depend on `jobs`.
inline CvResult run_stage(const Dataset& d, std::size_t n_folds, const std::function<FoldPlan(std::size_t)>& plan_for,
                          const StageOptions& opt, int stage = 1) {
  const std::size_t cap = opt.max_folds ? opt.max_folds : 4 * n_folds;
  std::vector<FoldPlan> plans;
  std::set<std::string> covered;
  auto uncovered = [&] { return covered.size() < d.size(); };
  for (std::size_t k = 0; k < n_folds || (uncovered() && k < cap); ++k) {
    plans.push_back(plan_for(k));
    std::set<std::string> tr;
    for (const auto& e : plans.back().train) tr.insert(e.first);
    for (const auto& id : d.ids) {
      if (!tr.count(id)) covered.insert(id);
    }
  }
  if (uncovered()) {
    std::string missing;
    for (const auto& id : d.ids) {
      if (!covered.count(id)) {
        missing = id;
        break;
      }
    }
    throw Error(detail::concat("run_stage: ", d.size() - covered.size(), " samples (e.g. ", missing,
                               ") are trained on in every one of ", plans.size(), " folds"));
  }

  std::vector<FoldOutcome> outcomes(plans.size());
  std::vector<std::exception_ptr> errors(plans.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plans.size(); i = next++) {
      try {
        outcomes[i] = run_fold(d, plans[i], opt);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, plans.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CvResult res;
  res.stage = stage;
  for (auto& fo : outcomes) {
    for (const auto& [id, pp] : fo.predictions) {
      auto& a = res.accumulated[id];
      a.sum0 += pp.p[0];
      a.sum1 += pp.p[1];
      ++a.count;
    }
    res.folds.push_back(std::move(fo));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Two-stage pipeline

enum class RunMode { ppg, public_data };

struct PipelineOptions {
  StageOptions stage;
  std::size_t n_folds = 5;
  PpgFoldSpec ppg;
  double noise_ratio = 0.3;
  bool shuffle_noise = false;
  bool skip_cl = false;
  std::uint64_t seed = 0;
};

struct ClOutcome {
  cl::ClassThresholds thresholds;
  cl::JointDistribution joint;
  cl::NoiseFilterResult filter;
};

struct PipelineResult {
  RunMode mode = RunMode::ppg;
  CvResult stage1;
  std::optional<ClOutcome> cl;
  std::optional<CvResult> stage2;
  std::vector<std::string> heldout;
  std::vector<std::string> un1, un2;
  std::optional<PublicLayout> layout;

  const CvResult& final_stage() const { return stage2 ? *stage2 : stage1; }
};

/// Stage one, confidence learning on the TP/TN accumulated predictions,
/// removal from the UN pool, stage two on what is left.
inline PipelineResult run_ppg_pipeline(const Dataset& d, std::size_t repetition, const PipelineOptions& opt) {
  PipelineResult r;
  r.mode = RunMode::ppg;
  auto spec = opt.ppg;
  spec.n_folds = opt.n_folds;
  r.heldout = choose_heldout(d, repetition, spec.heldout, opt.seed);
  const std::uint64_t rep_seed = derive_seed(opt.seed, {tag_of("repetition"), repetition});
  PpgLayout L = ppg_layout(d, r.heldout, spec, rep_seed);
  r.un1 = d.ids_in(Group::un);
  r.stage1 = run_stage(d, spec.n_folds, [&](std::size_t k) { return ppg_fold(L, k); }, opt.stage, 1);
  if (opt.skip_cl) return r;

  std::set<std::string> held(r.heldout.begin(), r.heldout.end());
  std::vector<cl::SamplePrediction> known, pool;
  for (const auto& id : d.ids) {
    const Group g = d.group.at(id);
    if (held.count(id)) continue;
    cl::SamplePrediction s{id, r.stage1.averaged(id), d.label.at(id), g};
    (g == Group::un ? pool : known).push_back(std::move(s));
  }
  ClOutcome c;
  c.joint = cl::estimate_joint(known, &c.thresholds);
  c.filter = cl::pbnr_filter(pool, c.joint.q);
  std::set<std::string> removed;
  for (const auto& s : c.filter.removed) removed.insert(s.id);
  for (const auto& id : r.un1) {
    if (!removed.count(id)) r.un2.push_back(id);
  }
  r.cl = std::move(c);
  for (const auto& id : removed) L.un_allowed.erase(id);
  // removed ids are left out of training; they are still predicted
  r.stage2 = run_stage(d, spec.n_folds, [&](std::size_t k) { return ppg_fold(L, k); }, opt.stage, 2);
  return r;
}

/// Public data: clean labels stand in for TP/TN, and every sample with its
/// noisy-segment label is a removal candidate.
inline PipelineResult run_public_pipeline(const Dataset& d, const PipelineOptions& opt) {
  PipelineResult r;
  r.mode = RunMode::public_data;
  r.layout = public_layout(d, opt.n_folds, opt.noise_ratio, opt.seed, opt.shuffle_noise);
  const PublicLayout& L = *r.layout;
  r.stage1 = run_stage(d, opt.n_folds, [&](std::size_t k) { return public_fold(L, k); }, opt.stage, 1);
  if (opt.skip_cl) return r;

  std::vector<cl::SamplePrediction> known, cands;
  for (const auto& id : d.ids) {
    const ProbPair pp = r.stage1.averaged(id);
    const int y = L.clean.at(id);
    known.push_back({id, pp, y, y == 1 ? Group::tp : Group::tn});
    cands.push_back({id, pp, L.noisy.at(id), Group::un});
  }
  ClOutcome c;
  c.joint = cl::estimate_joint(known, &c.thresholds);
  c.filter = cl::pbnr_filter_symmetric(cands, c.joint.q);
  std::set<std::string> removed;
  for (const auto& s : c.filter.removed) removed.insert(s.id);
  r.cl = std::move(c);
  r.stage2 = run_stage(d, opt.n_folds, [&](std::size_t k) { return public_fold(L, k, removed); }, opt.stage, 2);
  return r;
}

// ---------------------------------------------------------------------------
// Ranking of held-out positives within the uncertain pool

struct RankResult {
  std::vector<std::pair<std::string, double>> ranking;  // id, accumulated p[1]; descending
  std::vector<std::pair<std::string, std::size_t>> heldout_ranks;  // 0-based
  double mean_rank = 0.0;
  std::size_t pool_size = 0;  // UN ids ranked
};

inline RankResult rank_uncertain(const CvResult& cv, const std::vector<std::string>& un_ids,
                                 const std::vector<std::string>& heldout) {
  RankResult r;
  for (const auto& id : un_ids) r.ranking.emplace_back(id, cv.averaged(id).p[1]);
  for (const auto& id : heldout) r.ranking.emplace_back(id, cv.averaged(id).p[1]);
  r.pool_size = un_ids.size();
  std::sort(r.ranking.begin(), r.ranking.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& h : heldout) {
    for (std::size_t i = 0; i < r.ranking.size(); ++i) {
      if (r.ranking[i].first == h) {
        r.heldout_ranks.emplace_back(h, i);
        r.mean_rank += static_cast<double>(i);
      }
    }
  }
  if (!heldout.empty()) r.mean_rank /= static_cast<double>(heldout.size());
  return r;
}

}  // namespace tnanet::exp
