#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tnanet/checkpoint.hpp"
#include "tnanet/config.hpp"
#include "tnanet/datasets.hpp"
#include "tnanet/experiment.hpp"

// Run directory layout (all text files; one record per line, `#` header lines):
//
//   config.txt              effective configuration (RunConfig::echo)
//   partition.txt           id group label truth          (truth "-" when unknown)
//   noise.txt               public mode: id ninth clean noisy
//   <rep>/heldout.txt       ppg mode: held-out TP ids of the repetition
//   <rep>/stageN/folds.txt  per fold: "fold k scored|coverage seed", then train (id:label), test, heldout, noisy lines
//   <rep>/stageN/fold_metrics.txt      fold scored accuracy f1 epochs converged final_loss
//   <rep>/stageN/fold_predictions.txt  fold id p0 p1
//   <rep>/stageN/predictions.txt       id count p0 p1   (accumulated averages)
//   <rep>/stageN/loss_curves.txt       fold, then the per-epoch supervised loss
//   <rep>/stageN/fold_K.tnanet         model checkpoints
//   <rep>/noise_report.txt  confidence-learning summary and removed samples
//   <rep>/ranks.txt         ppg mode: rank id p1 heldout   (stage one, UN pool plus held-out ids)
//   summary.txt             rep stage folds acc_mean acc_std f1_mean f1_std
//   feature_importance.txt  rank index name score  (final stage, mean over scored folds)
//   report.txt              human-readable tables of the above
//
// <rep> is rep0, rep1, ... in ppg mode and the run directory itself in public mode.
namespace tnanet::run {

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

inline exp::Dataset load_data(const RunConfig& c) {
  if (c.mode == "ppg") return data::load_ppg_dir(c.data.front());
  return data::load_public(c.data);
}

// ---------------------------------------------------------------------------
// writers

inline void write_stage(const fs::path& dir, const exp::CvResult& cv, bool checkpoints) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "folds.txt");
    for (const auto& fo : cv.folds) {
      const auto& p = fo.plan;
      out << "fold " << p.index << ' ' << (p.scored ? "scored" : "coverage") << ' ' << p.seed << '\n';
      out << "train";
      for (const auto& [id, y] : p.train) out << ' ' << id << ':' << y;
      out << "\ntest";
      for (const auto& id : p.test_ids) out << ' ' << id;
      out << "\nheldout";
      for (const auto& id : p.heldout_ids) out << ' ' << id;
      out << "\nnoisy";
      for (const auto& id : p.noisy_ids) out << ' ' << id;
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "fold_metrics.txt");
    out << "# fold scored accuracy f1 epochs converged final_loss\n";
    for (const auto& fo : cv.folds) {
      out << fo.plan.index << ' ' << fo.plan.scored << ' ' << format_double(fo.metrics.accuracy) << ' '
          << format_double(fo.metrics.f1) << ' ' << fo.train.epochs << ' ' << fo.train.converged << ' '
          << format_double(fo.train.loss_curve.empty() ? 0.0 : fo.train.loss_curve.back()) << '\n';
    }
  }
  {
    auto out = open_out(dir / "fold_predictions.txt");
    out << "# fold id p0 p1\n";
    for (const auto& fo : cv.folds) {
      for (const auto& [id, pp] : fo.predictions) {
        out << fo.plan.index << ' ' << id << ' ' << format_double(pp.p[0]) << ' ' << format_double(pp.p[1]) << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "predictions.txt");
    out << "# id count p0 p1\n";
    for (const auto& [id, a] : cv.accumulated) {
      const auto m = a.mean();
      out << id << ' ' << a.count << ' ' << format_double(m.p[0]) << ' ' << format_double(m.p[1]) << '\n';
    }
  }
  {
    auto out = open_out(dir / "loss_curves.txt");
    for (const auto& fo : cv.folds) {
      out << fo.plan.index;
      for (double l : fo.train.loss_curve) out << ' ' << format_double(l);
      out << '\n';
    }
  }
  if (checkpoints) {
    for (const auto& fo : cv.folds) write_checkpoint(dir / ("fold_" + std::to_string(fo.plan.index) + ".tnanet"), fo.model);
  }
}

inline void write_ranks(const fs::path& path, const exp::RankResult& r) {
  auto out = open_out(path);
  out << "# pool " << r.pool_size << " heldout " << r.heldout_ranks.size() << '\n';
  out << "# rank id p1 heldout\n";
  std::set<std::string> held;
  for (const auto& [id, k] : r.heldout_ranks) held.insert(id);
  for (std::size_t i = 0; i < r.ranking.size(); ++i) {
    out << i << ' ' << r.ranking[i].first << ' ' << format_double(r.ranking[i].second) << ' ' << held.count(r.ranking[i].first)
        << '\n';
  }
}

struct StageLine {
  std::string rep;
  int stage = 1;
  exp::StageSummary s;
};

struct RunOutcome {
  std::vector<StageLine> stages;
  std::vector<exp::RankResult> ranks;  // ppg mode, one per repetition
  std::string report;
};

inline std::string mean_std(double m, double s) { return fixed(m) + " +- " + fixed(s); }

/// Runs the configured experiment and writes the manifest. Progress goes to `log` when given.
inline RunOutcome execute_run(const RunConfig& c, std::ostream* log = nullptr) {
  const auto dir = c.output;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output: " + dir.string() + " is not a directory");
    if (!fs::is_empty(dir)) {
      if (!fs::exists(dir / "config.txt")) {
        throw ConfigError("output: " + dir.string() + " is not empty and does not hold a previous run");
      }
      fs::remove_all(dir);
    }
  }
  const exp::Dataset d = load_data(c);
  const HyperParams hp = hyperparams_for(c, d.channels(), d.length());
  const auto opt = pipeline_options(c, hp);
  fs::create_directories(dir);
  open_out(dir / "config.txt") << c.echo();
  {
    auto out = open_out(dir / "partition.txt");
    out << "# id group label truth\n";
    for (const auto& id : d.ids) {
      const auto t = d.truth.find(id);
      out << id << ' ' << (c.mode == "ppg" ? cl::group_name(d.group.at(id)) : "-") << ' ' << d.label.at(id) << ' '
          << (t == d.truth.end() ? "-" : std::to_string(t->second)) << '\n';
    }
  }
  auto say = [&](const std::string& s) {
    if (log) *log << s << std::endl;
  };

  RunOutcome outcome;
  std::vector<const exp::CvResult*> finals;
  std::vector<exp::PipelineResult> results;
  const std::size_t reps = c.mode == "ppg" ? c.repetitions : 1;
  results.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    results.push_back(c.mode == "ppg" ? exp::run_ppg_pipeline(d, r, opt) : exp::run_public_pipeline(d, opt));
    const auto& res = results.back();
    const std::string rep = c.mode == "ppg" ? "rep" + std::to_string(r) : "";
    const fs::path rdir = rep.empty() ? dir : dir / rep;
    fs::create_directories(rdir);
    if (c.mode == "ppg") {
      auto out = open_out(rdir / "heldout.txt");
      for (const auto& id : res.heldout) out << id << '\n';
    } else {
      auto out = open_out(dir / "noise.txt");
      out << "# id ninth clean noisy\n";
      std::map<std::string, std::size_t> ninth;
      for (std::size_t j = 0; j < res.layout->ninths.size(); ++j) {
        for (const auto& id : res.layout->ninths[j]) ninth[id] = j;
      }
      for (const auto& [id, j] : ninth) {
        out << id << ' ' << j << ' ' << res.layout->clean.at(id) << ' ' << res.layout->noisy.at(id) << '\n';
      }
    }
    write_stage(rdir / "stage1", res.stage1, c.checkpoints);
    outcome.stages.push_back({rep, 1, res.stage1.summary()});
    if (res.cl) {
      cl::write_noise_report(rdir / "noise_report.txt", res.cl->filter, res.cl->joint, res.cl->thresholds);
      write_stage(rdir / "stage2", *res.stage2, c.checkpoints);
      outcome.stages.push_back({rep, 2, res.stage2->summary()});
    }
    if (c.mode == "ppg") {
      outcome.ranks.push_back(exp::rank_uncertain(res.stage1, res.un1, res.heldout));
      write_ranks(rdir / "ranks.txt", outcome.ranks.back());
    }
    finals.push_back(&res.final_stage());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream msg;
    msg << (rep.empty() ? "run" : rep) << ": stage 1 accuracy " << fixed(res.stage1.summary().acc_mean);
    if (res.stage2) msg << ", stage 2 accuracy " << fixed(res.stage2->summary().acc_mean);
    msg << " (" << fixed(secs, 1) << " s)";
    say(msg.str());
  }

  {
    auto out = open_out(dir / "summary.txt");
    out << "# rep stage folds acc_mean acc_std f1_mean f1_std\n";
    for (const auto& l : outcome.stages) {
      out << (l.rep.empty() ? "-" : l.rep) << ' ' << l.stage << ' ' << l.s.folds << ' ' << format_double(l.s.acc_mean)
          << ' ' << format_double(l.s.acc_std) << ' ' << format_double(l.s.f1_mean) << ' ' << format_double(l.s.f1_std)
          << '\n';
    }
  }

  // importance averaged over the scored folds of every final stage
  std::vector<double> score(d.channels(), 0.0);
  std::size_t models = 0;
  for (const auto* cv : finals) {
    for (const auto& fo : cv->folds) {
      if (!fo.plan.scored) continue;
      for (const auto& fs_ : feature_importance(fo.model, d.feature_names)) score[fs_.index] += fs_.score;
      ++models;
    }
  }
  std::vector<FeatureScore> importance;
  for (std::size_t i = 0; i < score.size(); ++i) {
    importance.push_back({i, i < d.feature_names.size() ? d.feature_names[i] : "ch" + std::to_string(i),
                          score[i] / static_cast<double>(std::max<std::size_t>(models, 1))});
  }
  std::stable_sort(importance.begin(), importance.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  {
    auto out = open_out(dir / "feature_importance.txt");
    out << "# rank index name score\n";
    for (std::size_t i = 0; i < importance.size(); ++i) {
      out << i + 1 << ' ' << importance[i].index << ' ' << importance[i].name << ' ' << format_double(importance[i].score)
          << '\n';
    }
  }

  std::ostringstream rep;
  rep << "TNANet run report\n\n";
  rep << "condition: " << exp::condition_name(c.ssl()) << (c.skip_cl ? ", confidence learning skipped" : "") << "\n\n";
  rep << "configuration\n";
  std::istringstream echo(c.echo());
  for (std::string line; std::getline(echo, line);) rep << "  " << line << '\n';
  rep << "\nstage summary (scored folds, mean +- std)\n";
  rep << "  rep    stage  folds  accuracy          f1\n";
  for (const auto& l : outcome.stages) {
    char row[160];
    std::snprintf(row, sizeof row, "  %-6s %-6d %-6zu %-17s %s\n", l.rep.empty() ? "-" : l.rep.c_str(), l.stage,
                  l.s.folds, mean_std(l.s.acc_mean, l.s.acc_std).c_str(), mean_std(l.s.f1_mean, l.s.f1_std).c_str());
    rep << row;
  }
  if (reps > 1) {
    for (int stage = 1; stage <= 2; ++stage) {
      double a = 0.0, f = 0.0;
      std::size_t n = 0;
      for (const auto& l : outcome.stages) {
        if (l.stage != stage) continue;
        a += l.s.acc_mean;
        f += l.s.f1_mean;
        ++n;
      }
      if (n) {
        rep << "  mean over repetitions, stage " << stage << ": accuracy " << fixed(a / static_cast<double>(n)) << ", f1 "
            << fixed(f / static_cast<double>(n)) << '\n';
      }
    }
  }
  rep << "\nnoise filter\n";
  for (std::size_t r = 0; r < results.size(); ++r) {
    const auto& res = results[r];
    if (!res.cl) {
      rep << "  skipped\n";
      continue;
    }
    const auto& q = res.cl->joint.q;
    rep << "  " << (c.mode == "ppg" ? "rep" + std::to_string(r) + ": " : "") << "candidates "
        << res.cl->filter.margins.size() << ", removed " << res.cl->filter.removed.size() << ", thresholds "
        << fixed(res.cl->thresholds.t0) << ' ' << fixed(res.cl->thresholds.t1) << ", joint [[" << fixed(q[0][0]) << ", "
        << fixed(q[0][1]) << "], [" << fixed(q[1][0]) << ", " << fixed(q[1][1]) << "]]\n";
  }
  if (c.mode == "ppg") {
    rep << "\nheld-out TP ranks (stage 1, 0-based, among " << (outcome.ranks.empty() ? 0 : outcome.ranks[0].ranking.size())
        << " ranked samples)\n";
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < outcome.ranks.size(); ++r) {
      for (const auto& [id, k] : outcome.ranks[r].heldout_ranks) {
        rep << "  rep" << r << "  " << id << "  " << k << '\n';
        total += static_cast<double>(k);
        ++n;
      }
      rep << "  rep" << r << " average " << fixed(outcome.ranks[r].mean_rank, 2) << '\n';
    }
    if (n) rep << "  overall average " << fixed(total / static_cast<double>(n), 2) << '\n';
  }
  rep << "\nfeature importance (mean absolute depthwise weight)\n";
  for (std::size_t i = 0; i < importance.size(); ++i) {
    rep << "  " << i + 1 << "  " << importance[i].name << "  " << fixed(importance[i].score, 6) << '\n';
  }
  outcome.report = rep.str();
  open_out(dir / "report.txt") << outcome.report;
  return outcome;
}

// ---------------------------------------------------------------------------
// readers

inline std::vector<std::string> data_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("missing manifest file " + p.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

inline std::map<std::string, std::string> read_echo(const fs::path& run_dir) {
  std::map<std::string, std::string> out;
  for (const auto& line : data_lines(run_dir / "config.txt")) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

inline std::map<std::string, exp::Accumulated> read_predictions(const fs::path& p) {
  std::map<std::string, exp::Accumulated> out;
  for (const auto& line : data_lines(p)) {
    std::istringstream ls(line);
    std::string id, p0, p1;
    std::size_t n = 0;
    if (!(ls >> id >> n >> p0 >> p1)) throw DataError(p.string() + ": malformed line '" + line + "'");
    const double a = parse_double(p0), b = parse_double(p1);
    out[id] = {a * static_cast<double>(n), b * static_cast<double>(n), n};
  }
  return out;
}

struct RankTable {
  struct Rep {
    std::vector<std::pair<std::string, std::size_t>> ranks;
    double average = 0.0;
    std::size_t ranked = 0;
  };
  std::vector<Rep> reps;
  double overall = 0.0;
  bool all_within = true;
};

/// Recomputes held-out ranks from a ppg run directory.
inline RankTable rank_table(const fs::path& run_dir, int stage, std::size_t top) {
  const auto echo = read_echo(run_dir);
  if (echo.count("mode") == 0 || echo.at("mode") != "ppg") {
    throw DataError("mode mismatch: " + run_dir.string() + " is not a ppg run (mode=" +
                    (echo.count("mode") ? echo.at("mode") : std::string("?")) + ")");
  }
  std::vector<std::string> un;
  for (const auto& line : data_lines(run_dir / "partition.txt")) {
    std::istringstream ls(line);
    std::string id, g;
    ls >> id >> g;
    if (g == "UN") un.push_back(id);
  }
  RankTable t;
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0;; ++r) {
    const auto rdir = run_dir / ("rep" + std::to_string(r));
    if (!fs::exists(rdir)) break;
    exp::CvResult cv;
    cv.accumulated = read_predictions(rdir / ("stage" + std::to_string(stage)) / "predictions.txt");
    const auto held = data_lines(rdir / "heldout.txt");
    std::vector<std::string> pool;
    for (const auto& id : un) {
      if (cv.accumulated.count(id)) pool.push_back(id);
    }
    const auto res = exp::rank_uncertain(cv, pool, held);
    RankTable::Rep rep{res.heldout_ranks, res.mean_rank, res.ranking.size()};
    for (const auto& [id, k] : res.heldout_ranks) {
      t.all_within = t.all_within && k < top;
      total += static_cast<double>(k);
      ++n;
    }
    t.reps.push_back(std::move(rep));
  }
  if (t.reps.empty()) throw DataError("missing manifest: no repetition directories under " + run_dir.string());
  t.overall = n ? total / static_cast<double>(n) : 0.0;
  return t;
}

}  // namespace tnanet::run
