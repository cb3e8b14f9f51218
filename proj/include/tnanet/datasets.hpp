#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tnanet/experiment.hpp"
#include "tnanet/ppg.hpp"
#include "tnanet/synthetic.hpp"

// Public data file: one sample per line, `label;ch1_v1,ch1_v2,...;ch2_v1,...`,
// label 0 or 1, every sample with the same channel count and length.
//
// PPG data directory: `groups.txt` with lines `id GROUP [truth]` (GROUP one of
// TP, TN, UN; truth 0/1 when known) plus one `<id>.features` file per id.
namespace tnanet::data {

namespace fs = std::filesystem;

inline constexpr const char* kFeatureExt = ".features";
inline constexpr const char* kRawExt = ".ppg";

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto end = s.find(sep, start);
    out.emplace_back(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) return out;
    start = end + 1;
  }
}

// ---------------------------------------------------------------------------
// Public format

inline std::vector<synth::LabeledSeries> read_public_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<synth::LabeledSeries> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto where = [&] { return detail::concat(path.string(), ":", lineno, ": "); };
    auto parts = split(line, ';');
    if (parts.size() < 2) throw DataError(where() + "expected label;channel[;channel...]");
    synth::LabeledSeries s;
    const auto lab = trim(parts[0]);
    if (lab != "0" && lab != "1") throw DataError(where() + "label '" + lab + "' is not 0 or 1");
    s.label = lab == "1" ? 1 : 0;
    std::vector<std::vector<double>> rows;
    for (std::size_t c = 1; c < parts.size(); ++c) {
      try {
        rows.push_back(parse_doubles(parts[c], ','));
      } catch (const DataError& e) {
        throw DataError(where() + "channel " + std::to_string(c - 1) + ": " + e.what());
      }
      if (rows.back().size() != rows.front().size()) throw DataError(where() + "channels differ in length");
    }
    s.series = FeatureMatrix(rows.size(), rows.front().size());
    s.series.names = channel_names(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), s.series.row(r).begin());
    if (!out.empty() && (s.series.rows != out.front().series.rows || s.series.cols != out.front().series.cols)) {
      throw DataError(detail::concat(where(), "sample is ", s.series.rows, "x", s.series.cols, ", first sample is ",
                                     out.front().series.rows, "x", out.front().series.cols));
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError(path.string() + ": no samples");
  return out;
}

inline void write_public_file(const fs::path& path, const std::vector<synth::LabeledSeries>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : samples) {
    out << s.label;
    for (std::size_t r = 0; r < s.series.rows; ++r) {
      out << ';';
      const auto row = s.series.row(r);
      for (std::size_t t = 0; t < row.size(); ++t) {
        if (t) out << ',';
        out << format_double(row[t]);
      }
    }
    out << '\n';
  }
}

/// Pools the files into one dataset; ids are `<file stem>_<line index>`.
inline exp::Dataset load_public(const std::vector<fs::path>& files) {
  exp::Dataset d;
  for (const auto& f : files) {
    const auto samples = read_public_file(f);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      char idx[16];
      std::snprintf(idx, sizeof idx, "%05zu", i);
      d.add(f.stem().string() + "_" + idx, samples[i].series, samples[i].label);
    }
  }
  d.feature_names = channel_names(d.channels());
  return d;
}

/// Converts a `.ts` multivariate archive file (two classes, equal length, no
/// missing values) to the public format. Class labels map to 0 and 1 in the
/// order of the `@classLabel` header.
inline std::vector<synth::LabeledSeries> convert_ts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> classes;
  bool in_data = false;
  std::vector<synth::LabeledSeries> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto where = [&] { return detail::concat(path.string(), ":", lineno, ": "); };
    if (!in_data) {
      if (t[0] != '@') throw DataError(where() + "expected a header line");
      std::istringstream hs(t);
      std::string key;
      hs >> key;
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
      if (key == "@classlabel") {
        std::string flag, c;
        hs >> flag;
        while (hs >> c) classes.push_back(c);
      } else if (key == "@data") {
        if (classes.size() != 2) {
          throw DataError(detail::concat(path.string(), ": need exactly 2 class labels, header lists ", classes.size()));
        }
        in_data = true;
      }
      continue;
    }
    auto dims = split(t, ':');
    if (dims.size() < 2) throw DataError(where() + "expected dim1:dim2:...:label");
    const std::string cls = trim(dims.back());
    dims.pop_back();
    const auto it = std::find(classes.begin(), classes.end(), cls);
    if (it == classes.end()) throw DataError(where() + "unknown class label '" + cls + "'");
    if (t.find('?') != std::string::npos) throw DataError(where() + "missing values are not supported");
    synth::LabeledSeries s;
    s.label = static_cast<int>(it - classes.begin());
    std::vector<std::vector<double>> rows;
    for (const auto& dim : dims) rows.push_back(parse_doubles(dim, ','));
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) throw DataError(where() + "dimensions differ in length");
    }
    s.series = FeatureMatrix(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), s.series.row(r).begin());
    if (!out.empty() && (s.series.rows != out.front().series.rows || s.series.cols != out.front().series.cols)) {
      throw DataError(where() + "unequal series length or dimension count");
    }
    out.push_back(std::move(s));
  }
  if (!in_data) throw DataError(path.string() + ": no @data section");
  if (out.empty()) throw DataError(path.string() + ": no samples");
  return out;
}

// ---------------------------------------------------------------------------
// PPG data directories

inline cl::Group parse_group(const std::string& s) {
  if (s == "TP") return cl::Group::tp;
  if (s == "TN") return cl::Group::tn;
  if (s == "UN") return cl::Group::un;
  throw DataError("unknown group '" + s + "' (expected TP, TN or UN)");
}

struct GroupEntry {
  std::string id;
  cl::Group group = cl::Group::un;
  std::optional<int> truth;
};

inline std::vector<GroupEntry> read_groups(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<GroupEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ls(t);
    GroupEntry e;
    std::string g, truth;
    ls >> e.id >> g;
    try {
      e.group = parse_group(g);
    } catch (const DataError& err) {
      throw DataError(detail::concat(path.string(), ":", lineno, ": ", err.what()));
    }
    if (ls >> truth) {
      if (truth != "0" && truth != "1") throw DataError(detail::concat(path.string(), ":", lineno, ": truth must be 0 or 1"));
      e.truth = truth == "1";
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline void write_groups(const fs::path& path, const std::vector<GroupEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : entries) {
    out << e.id << ' ' << cl::group_name(e.group);
    if (e.truth) out << ' ' << *e.truth;
    out << '\n';
  }
}

inline int given_label(cl::Group g) { return g == cl::Group::tp ? 1 : 0; }

inline exp::Dataset load_ppg_dir(const fs::path& dir) {
  exp::Dataset d;
  for (const auto& e : read_groups(dir / "groups.txt")) {
    d.add(e.id, ppg::read_feature_matrix(dir / (e.id + kFeatureExt)), given_label(e.group), e.group, e.truth);
  }
  if (d.size() == 0) throw DataError(dir.string() + ": groups.txt lists no samples");
  d.feature_names = d.x.begin()->second.names;
  return d;
}

// ---------------------------------------------------------------------------
// Synthetic PPG cohort: TP subjects from the positive profile, TN from the
// negative one, UN mostly negative with a planted positive fraction. Subject
// HRV levels spread around each class mean, so classes overlap.

struct CohortSpec {
  std::size_t n_tp = 30;
  std::size_t n_tn = 21;
  std::size_t n_un = 200;
  double planted = 0.1;  // positive fraction of UN
  double hrv_positive = 0.3;
  double hrv_negative = 1.0;
  double hrv_spread = 0.25;  // std of log subject HRV level
  double stimulation_s = 300.0;
  double static_s = 180.0;
  double fs = 100.0;
};

struct CohortSubject {
  GroupEntry entry;
  synth::PpgProfile profile;
  std::uint64_t seed = 0;
};

inline std::vector<CohortSubject> plan_cohort(const CohortSpec& spec, std::uint64_t seed) {
  if (!(spec.planted >= 0.0 && spec.planted <= 1.0)) throw ConfigError("planted fraction outside [0, 1]");
  Rng rng(derive_seed(seed, {tag_of("cohort")}));
  std::vector<CohortSubject> out;
  const auto n_planted = static_cast<std::size_t>(std::llround(spec.planted * static_cast<double>(spec.n_un)));
  std::vector<int> un_truth(spec.n_un, 0);
  std::fill(un_truth.begin(), un_truth.begin() + static_cast<std::ptrdiff_t>(n_planted), 1);
  rng.shuffle(un_truth);
  auto add = [&](const std::string& id, cl::Group g, int truth) {
    CohortSubject s;
    s.entry = {id, g, truth};
    s.profile = synth::PpgProfile::for_class(truth ? synth::PpgClass::positive : synth::PpgClass::negative);
    s.profile.hrv = (truth ? spec.hrv_positive : spec.hrv_negative) * std::exp(rng.normal(0.0, spec.hrv_spread));
    s.seed = derive_seed(seed, {tag_of("subject"), out.size()});
    out.push_back(std::move(s));
  };
  char id[32];
  for (std::size_t i = 0; i < spec.n_tp; ++i) {
    std::snprintf(id, sizeof id, "tp%03zu", i);
    add(id, cl::Group::tp, 1);
  }
  for (std::size_t i = 0; i < spec.n_tn; ++i) {
    std::snprintf(id, sizeof id, "tn%03zu", i);
    add(id, cl::Group::tn, 0);
  }
  for (std::size_t i = 0; i < spec.n_un; ++i) {
    std::snprintf(id, sizeof id, "un%03zu", i);
    add(id, cl::Group::un, un_truth[i]);
  }
  return out;
}

inline synth::SyntheticPpg generate_subject(const CohortSpec& spec, const CohortSubject& s) {
  return synth::generate_synthetic_ppg(s.profile, spec.stimulation_s, spec.fs, s.seed, spec.static_s, s.entry.id);
}

/// Generates and preprocesses the whole cohort in memory.
inline exp::Dataset synthetic_ppg_dataset(const CohortSpec& spec, std::uint64_t seed) {
  exp::Dataset d;
  for (const auto& s : plan_cohort(spec, seed)) {
    const auto rec = generate_subject(spec, s);
    d.add(s.entry.id, ppg::build_feature_matrix(rec.recording), given_label(s.entry.group), s.entry.group,
          s.entry.truth);
  }
  d.feature_names.assign(ppg::feature_names().begin(), ppg::feature_names().end());
  return d;
}

inline exp::Dataset dataset_from_series(const std::vector<synth::LabeledSeries>& samples) {
  exp::Dataset d;
  for (const auto& s : samples) d.add(s.id, s.series, s.label);
  d.feature_names = channel_names(d.channels());
  return d;
}

}  // namespace tnanet::data
