#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "tnanet/checkpoint.hpp"
#include "tnanet/datasets.hpp"
#include "tnanet/manifest.hpp"

namespace fs = std::filesystem;
using namespace tnanet;

namespace {

int cmd_preprocess(const fs::path& raw_dir, const fs::path& out_dir) {
  if (!fs::is_directory(raw_dir)) throw DataError(raw_dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(raw_dir)) {
    if (e.path().extension() == data::kRawExt) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no " + std::string(data::kRawExt) + " files in " + raw_dir.string());
  fs::create_directories(out_dir);
  std::size_t failures = 0;
  for (const auto& f : files) {
    try {
      ppg::PreprocessStats stats;
      const auto m = ppg::build_feature_matrix(ppg::read_raw_recording(f), &stats);
      ppg::write_feature_matrix(out_dir / (f.stem().string() + data::kFeatureExt), m);
      std::cout << f.stem().string() << " windows=" << stats.windows_used << " filled=" << stats.failed_windows << '\n';
    } catch (const DataError& e) {
      ++failures;
      std::cerr << "error: " << f.filename().string() << ": " << e.what() << '\n';
    }
  }
  if (fs::exists(raw_dir / "groups.txt")) {
    fs::copy_file(raw_dir / "groups.txt", out_dir / "groups.txt", fs::copy_options::overwrite_existing);
  }
  std::cout << files.size() - failures << " of " << files.size() << " recordings preprocessed\n";
  return failures ? 1 : 0;
}

int cmd_run(const fs::path& config, const std::vector<std::string>& sets, const std::optional<std::uint64_t>& seed,
            const std::string& output, const std::optional<std::size_t>& jobs, bool quiet) {
  auto kvs = run::read_config_file(config);
  // relative data/output paths in the file resolve against the file's directory
  const auto base = config.parent_path();
  for (auto& [k, v] : kvs) {
    if (k == "output" && fs::path(v).is_relative()) v = (base / v).string();
    if (k == "data") {
      std::string joined;
      for (const auto& part : data::split(v, ',')) {
        const auto t = data::trim(part);
        if (t.empty()) continue;
        joined += (joined.empty() ? "" : ",") + (fs::path(t).is_relative() ? (base / t).string() : t);
      }
      v = joined;
    }
  }
  if (const char* env = std::getenv("TNANET_OUTPUT_DIR"); env && *env) kvs.emplace_back("output", env);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kvs.emplace_back(data::trim(s.substr(0, eq)), data::trim(s.substr(eq + 1)));
  }
  if (seed) kvs.emplace_back("seed", std::to_string(*seed));
  if (!output.empty()) kvs.emplace_back("output", output);
  if (jobs) kvs.emplace_back("jobs", std::to_string(*jobs));
  const auto cfg = run::build_config(kvs);
  Log::quiet() = quiet;
  const auto outcome = run::execute_run(cfg, &std::cout);
  std::cout << '\n' << outcome.report;
  return 0;
}

int cmd_rank(const fs::path& dir, std::size_t top, int stage) {
  const auto t = run::rank_table(dir, stage, top);
  std::cout << "held-out TP ranks (stage " << stage << ", 0-based)\n";
  std::cout << "rep  id  rank\n";
  for (std::size_t r = 0; r < t.reps.size(); ++r) {
    for (const auto& [id, k] : t.reps[r].ranks) std::cout << r << "  " << id << "  " << k << '\n';
    std::cout << r << "  average  " << run::fixed(t.reps[r].average, 2) << '\n';
  }
  std::cout << "overall average " << run::fixed(t.overall, 2) << '\n';
  std::cout << "all ranks < " << top << ": " << (t.all_within ? "yes" : "no") << '\n';
  return 0;
}

int cmd_features(const fs::path& ckpt, std::string output) {
  const auto p = read_checkpoint(ckpt);
  std::vector<std::string> names;
  if (p.hp.channels == ppg::kFeatureCount) names.assign(ppg::feature_names().begin(), ppg::feature_names().end());
  const auto scores = feature_importance(p, names);
  if (output.empty()) output = ckpt.string() + ".importance.txt";
  std::ostringstream table;
  table << "# rank feature\n";
  for (std::size_t i = 0; i < scores.size(); ++i) table << i + 1 << ' ' << scores[i].name << '\n';
  std::cout << table.str();
  run::open_out(output) << table.str();
  return 0;
}

struct SynthArgs {
  std::size_t n = 1;
  std::string cls = "negative";
  std::uint64_t seed = 0;
  fs::path out;
  double bpm = 72.0, bpm_std = 6.0, duration = 300.0, static_s = 180.0, fs = 100.0, noise = 0.03;
  std::optional<double> hrv;
  std::string prefix = "synth";
};

int cmd_synth(const SynthArgs& a) {
  if (a.cls != "positive" && a.cls != "negative") throw ConfigError("--class must be positive or negative");
  auto prof = synth::PpgProfile::for_class(a.cls == "positive" ? synth::PpgClass::positive : synth::PpgClass::negative);
  prof.bpm_mean = a.bpm;
  prof.bpm_std = a.bpm_std;
  prof.noise = a.noise;
  if (a.hrv) prof.hrv = *a.hrv;
  prof.validate();
  fs::create_directories(a.out);
  auto truth = run::open_out(a.out / "ground_truth.txt");
  truth << "# id bpm mean_ibi_s sdnn_ms heart_rate\n";
  for (std::size_t i = 0; i < a.n; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s_%03zu", a.prefix.c_str(), i);
    const auto s = synth::generate_synthetic_ppg(prof, a.duration, a.fs, derive_seed(a.seed, {tag_of("synth"), i}),
                                                 a.static_s, id);
    ppg::write_raw_recording(a.out / (std::string(id) + data::kRawExt), s.recording);
    truth << id << ' ' << format_double(s.truth.bpm) << ' ' << format_double(s.truth.mean_ibi_s) << ' '
          << format_double(s.truth.sdnn_ms) << ' ' << format_double(s.truth.heart_rate) << '\n';
    std::cout << id << " mean_ibi_s=" << run::fixed(s.truth.mean_ibi_s) << " hr=" << run::fixed(s.truth.heart_rate, 2)
              << " sdnn_ms=" << run::fixed(s.truth.sdnn_ms, 2) << '\n';
  }
  return 0;
}

int cmd_synth_cohort(const data::CohortSpec& spec, std::uint64_t seed, const fs::path& out) {
  fs::create_directories(out);
  std::vector<data::GroupEntry> entries;
  auto truth = run::open_out(out / "ground_truth.txt");
  truth << "# id group truth hrv mean_ibi_s heart_rate\n";
  for (const auto& s : data::plan_cohort(spec, seed)) {
    const auto rec = data::generate_subject(spec, s);
    ppg::write_raw_recording(out / (s.entry.id + data::kRawExt), rec.recording);
    entries.push_back(s.entry);
    truth << s.entry.id << ' ' << cl::group_name(s.entry.group) << ' ' << *s.entry.truth << ' '
          << format_double(s.profile.hrv) << ' ' << format_double(rec.truth.mean_ibi_s) << ' '
          << format_double(rec.truth.heart_rate) << '\n';
  }
  data::write_groups(out / "groups.txt", entries);
  std::cout << entries.size() << " recordings written to " << out.string() << '\n';
  return 0;
}

int cmd_synth_scp(const synth::ScpConfig& cfg, std::uint64_t seed, const fs::path& out) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::write_public_file(out, synth::generate_scp_dataset(cfg, seed));
  std::cout << cfg.trials << " trials written to " << out.string() << '\n';
  return 0;
}

int cmd_convert(const fs::path& in, const fs::path& out) {
  const auto samples = data::convert_ts(in);
  data::write_public_file(out, samples);
  std::cout << samples.size() << " samples, " << samples.front().series.rows << " channels, length "
            << samples.front().series.cols << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TNANet: weakly-labelled physiological time-series classification with confidence learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tnanet 1.0");

  fs::path raw_dir, out_dir;
  auto* pre = app.add_subcommand("preprocess", "raw PPG recordings -> feature files");
  pre->add_option("raw_dir", raw_dir, "directory of .ppg recordings")->required();
  pre->add_option("out_dir", out_dir, "output directory for .features files")->required();

  fs::path config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string output;
  std::optional<std::size_t> jobs;
  bool quiet = false;
  auto* run_cmd = app.add_subcommand("run", "two-stage cross-validated experiment");
  run_cmd->add_option("--config", config, "key=value configuration file")->required();
  run_cmd->add_option("--set", sets, "override one key (key=value), repeatable");
  run_cmd->add_option("--seed", seed, "override the seed");
  run_cmd->add_option("--output", output, "override the output directory");
  run_cmd->add_option("--jobs", jobs, "folds trained in parallel");
  run_cmd->add_flag("--quiet", quiet, "suppress warnings");

  fs::path run_dir;
  std::size_t top = 200;
  int stage = 1;
  auto* rank = app.add_subcommand("rank", "held-out TP ranks of a ppg run");
  rank->add_option("run_dir", run_dir)->required();
  rank->add_option("--top", top, "rank threshold")->capture_default_str();
  rank->add_option("--stage", stage, "stage whose predictions are ranked")->check(CLI::Range(1, 2))->capture_default_str();

  fs::path ckpt;
  std::string feat_out;
  auto* feat = app.add_subcommand("features", "feature importance of a checkpoint");
  feat->add_option("checkpoint", ckpt)->required();
  feat->add_option("--output", feat_out, "table file (default: <checkpoint>.importance.txt)");

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "synthetic PPG recordings with ground truth");
  syn->add_option("--n", sa.n)->capture_default_str();
  syn->add_option("--class", sa.cls, "positive | negative")->capture_default_str();
  syn->add_option("--seed", sa.seed)->required();
  syn->add_option("--out", sa.out)->required();
  syn->add_option("--bpm", sa.bpm)->capture_default_str();
  syn->add_option("--bpm-std", sa.bpm_std)->capture_default_str();
  syn->add_option("--hrv", sa.hrv, "HRV scale (default from the class)");
  syn->add_option("--noise", sa.noise)->capture_default_str();
  syn->add_option("--duration", sa.duration, "stimulation seconds")->capture_default_str();
  syn->add_option("--static", sa.static_s, "resting seconds")->capture_default_str();
  syn->add_option("--fs", sa.fs)->capture_default_str();
  syn->add_option("--prefix", sa.prefix)->capture_default_str();

  data::CohortSpec cs;
  std::uint64_t cohort_seed = 0;
  fs::path cohort_out;
  auto* coh = app.add_subcommand("synth-cohort", "synthetic TP/TN/UN cohort with planted positives");
  coh->add_option("--seed", cohort_seed)->required();
  coh->add_option("--out", cohort_out)->required();
  coh->add_option("--tp", cs.n_tp)->capture_default_str();
  coh->add_option("--tn", cs.n_tn)->capture_default_str();
  coh->add_option("--un", cs.n_un)->capture_default_str();
  coh->add_option("--planted", cs.planted, "positive fraction of UN")->capture_default_str();
  coh->add_option("--duration", cs.stimulation_s)->capture_default_str();

  synth::ScpConfig scp;
  std::uint64_t scp_seed = 0;
  fs::path scp_out;
  auto* sscp = app.add_subcommand("synth-scp", "synthetic slow-cortical-potential trials in the public format");
  sscp->add_option("--seed", scp_seed)->required();
  sscp->add_option("--out", scp_out)->required();
  sscp->add_option("--trials", scp.trials)->capture_default_str();
  sscp->add_option("--channels", scp.channels)->capture_default_str();
  sscp->add_option("--length", scp.length)->capture_default_str();

  fs::path ts_in, ts_out;
  auto* conv = app.add_subcommand("convert", ".ts multivariate archive -> public format");
  conv->add_option("input", ts_in)->required();
  conv->add_option("output", ts_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*pre) return cmd_preprocess(raw_dir, out_dir);
    if (*run_cmd) return cmd_run(config, sets, seed, output, jobs, quiet);
    if (*rank) return cmd_rank(run_dir, top, stage);
    if (*feat) return cmd_features(ckpt, feat_out);
    if (*syn) return cmd_synth(sa);
    if (*coh) return cmd_synth_cohort(cs, cohort_seed, cohort_out);
    if (*sscp) return cmd_synth_scp(scp, scp_seed, scp_out);
    if (*conv) return cmd_convert(ts_in, ts_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
