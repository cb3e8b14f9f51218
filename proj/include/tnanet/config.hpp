#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tnanet/experiment.hpp"

// Run configuration: flat `key = value` lines, `#` starts a comment. Keys:
//
//   mode                     ppg | public
//   data                     ppg: feature directory; public: comma-separated data files
//   output                   run directory (env TNANET_OUTPUT_DIR overrides the file, flags override both)
//   seed                     required, unsigned integer
//   channels, length         optional; must match the data when given
//   hidden1, hidden2         encoder widths, 0 = derived from the length
//   filters, lr, max_epochs, patience, min_delta, activation (linear | sigmoid)
//   ssl_epochs               self-supervised epochs per layer
//   n_folds, repetitions     repetitions apply to ppg mode (held-out triples rotate)
//   test_tp, test_tn, train_un, heldout   ppg fold quotas
//   noise_ratio, shuffle_noise            public mode label noise
//   disable_self_supervised, self_supervised_un_only, skip_cl   ablations
//   jobs                     parallel folds (not echoed: results do not depend on it)
//   checkpoints              write one model file per fold
namespace tnanet::run {

namespace fs = std::filesystem;

struct RunConfig {
  std::string mode = "ppg";
  std::vector<fs::path> data;
  fs::path output;
  std::optional<std::uint64_t> seed;
  std::size_t channels = 0, length = 0;
  std::size_t hidden1 = 0, hidden2 = 0, filters = 16;
  double lr = 1e-3;
  std::size_t max_epochs = 100, patience = 10;
  double min_delta = 1e-5;
  std::string activation = "linear";
  std::size_t ssl_epochs = 3;
  std::size_t n_folds = 5, repetitions = 1;
  std::size_t test_tp = 6, test_tn = 6, train_un = 6, heldout = 3;
  double noise_ratio = 0.3;
  bool shuffle_noise = false;
  bool disable_self_supervised = false, self_supervised_un_only = false, skip_cl = false;
  std::size_t jobs = 1;
  bool checkpoints = true;

  exp::SelfSupervision ssl() const {
    if (disable_self_supervised) return exp::SelfSupervision::disabled;
    if (self_supervised_un_only) return exp::SelfSupervision::un_only;
    return exp::SelfSupervision::training_set;
  }

  /// Effective values, one `key=value` per line, keys in fixed order.
  std::string echo() const {
    std::ostringstream o;
    auto b = [](bool v) { return v ? "true" : "false"; };
    std::string paths;
    for (std::size_t i = 0; i < data.size(); ++i) paths += (i ? "," : "") + data[i].generic_string();
    o << "mode=" << mode << '\n' << "data=" << paths << '\n' << "seed=" << (seed ? std::to_string(*seed) : "") << '\n';
    o << "channels=" << channels << '\n' << "length=" << length << '\n';
    o << "hidden1=" << hidden1 << '\n' << "hidden2=" << hidden2 << '\n' << "filters=" << filters << '\n';
    o << "lr=" << format_double(lr) << '\n' << "max_epochs=" << max_epochs << '\n' << "patience=" << patience << '\n';
    o << "min_delta=" << format_double(min_delta) << '\n' << "activation=" << activation << '\n';
    o << "ssl_epochs=" << ssl_epochs << '\n' << "n_folds=" << n_folds << '\n' << "repetitions=" << repetitions << '\n';
    o << "test_tp=" << test_tp << '\n' << "test_tn=" << test_tn << '\n' << "train_un=" << train_un << '\n';
    o << "heldout=" << heldout << '\n' << "noise_ratio=" << format_double(noise_ratio) << '\n';
    o << "shuffle_noise=" << b(shuffle_noise) << '\n' << "disable_self_supervised=" << b(disable_self_supervised) << '\n';
    o << "self_supervised_un_only=" << b(self_supervised_un_only) << '\n' << "skip_cl=" << b(skip_cl) << '\n';
    o << "checkpoints=" << b(checkpoints) << '\n';
    return o.str();
  }
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues parse_key_values(std::istream& in, const std::string& source) {
  KeyValues out;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> errors;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto z = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, z - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      errors.push_back(detail::concat(source, ":", lineno, ": expected key = value"));
      continue;
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += e + "\n";
    throw ConfigError(msg.substr(0, msg.size() - 1));
  }
  return out;
}

inline KeyValues read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_key_values(in, path.string());
}

/// Applies key/value pairs in order (later wins) and validates the result.
/// Every problem found is reported in one ConfigError.
inline RunConfig build_config(const KeyValues& kvs) {
  RunConfig c;
  std::vector<std::string> errors;
  auto as_size = [&](const std::string& k, const std::string& v, std::size_t& dst) {
    try {
      std::size_t pos = 0;
      if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
      const auto x = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      dst = static_cast<std::size_t>(x);
    } catch (const std::exception&) {
      errors.push_back(k + ": '" + v + "' is not a non-negative integer");
    }
  };
  auto as_double = [&](const std::string& k, const std::string& v, double& dst) {
    try {
      dst = parse_double(v);
    } catch (const DataError&) {
      errors.push_back(k + ": '" + v + "' is not a number");
    }
  };
  auto as_bool = [&](const std::string& k, const std::string& v, bool& dst) {
    if (v == "true" || v == "1") {
      dst = true;
    } else if (v == "false" || v == "0") {
      dst = false;
    } else {
      errors.push_back(k + ": '" + v + "' is not true or false");
    }
  };
  const std::map<std::string, std::size_t*> sizes{
      {"channels", &c.channels},     {"length", &c.length},         {"hidden1", &c.hidden1},
      {"hidden2", &c.hidden2},       {"filters", &c.filters},       {"max_epochs", &c.max_epochs},
      {"patience", &c.patience},     {"ssl_epochs", &c.ssl_epochs}, {"n_folds", &c.n_folds},
      {"repetitions", &c.repetitions}, {"test_tp", &c.test_tp},     {"test_tn", &c.test_tn},
      {"train_un", &c.train_un},     {"heldout", &c.heldout},       {"jobs", &c.jobs}};
  const std::map<std::string, double*> doubles{{"lr", &c.lr}, {"min_delta", &c.min_delta}, {"noise_ratio", &c.noise_ratio}};
  const std::map<std::string, bool*> bools{{"shuffle_noise", &c.shuffle_noise},
                                           {"disable_self_supervised", &c.disable_self_supervised},
                                           {"self_supervised_un_only", &c.self_supervised_un_only},
                                           {"skip_cl", &c.skip_cl},
                                           {"checkpoints", &c.checkpoints}};
  for (const auto& [k, v] : kvs) {
    if (auto it = sizes.find(k); it != sizes.end()) {
      as_size(k, v, *it->second);
    } else if (auto dt = doubles.find(k); dt != doubles.end()) {
      as_double(k, v, *dt->second);
    } else if (auto bt = bools.find(k); bt != bools.end()) {
      as_bool(k, v, *bt->second);
    } else if (k == "mode") {
      c.mode = v;
    } else if (k == "activation") {
      c.activation = v;
    } else if (k == "output") {
      c.output = v;
    } else if (k == "data") {
      c.data.clear();
      std::size_t start = 0;
      while (start <= v.size()) {
        const auto end = v.find(',', start);
        const auto part = v.substr(start, end == std::string::npos ? std::string::npos : end - start);
        if (!part.empty()) c.data.emplace_back(part);
        if (end == std::string::npos) break;
        start = end + 1;
      }
    } else if (k == "seed") {
      std::size_t s = 0;
      const auto before = errors.size();
      as_size(k, v, s);
      if (errors.size() == before) c.seed = s;
    } else {
      errors.push_back("unknown key '" + k + "'");
    }
  }

  if (c.mode != "ppg" && c.mode != "public") errors.push_back("mode: '" + c.mode + "' is not ppg or public");
  if (!c.seed) errors.push_back("seed: required");
  if (c.output.empty()) errors.push_back("output: required");
  if (c.data.empty()) errors.push_back("data: required");
  for (const auto& p : c.data) {
    if (!fs::exists(p)) errors.push_back("data: " + p.string() + " does not exist");
  }
  if (c.mode == "ppg" && c.data.size() > 1) errors.push_back("data: ppg mode takes one feature directory");
  if (c.activation != "linear" && c.activation != "sigmoid") {
    errors.push_back("activation: '" + c.activation + "' is not linear or sigmoid");
  }
  if (!(c.lr > 0.0)) errors.push_back("lr: must be positive");
  if (!(c.min_delta >= 0.0)) errors.push_back("min_delta: must be non-negative");
  if (!(c.noise_ratio >= 0.0 && c.noise_ratio <= 1.0)) errors.push_back("noise_ratio: must lie in [0, 1]");
  if (c.filters == 0) errors.push_back("filters: must be positive");
  if (c.max_epochs == 0) errors.push_back("max_epochs: must be positive");
  if (c.n_folds == 0) errors.push_back("n_folds: must be positive");
  if (c.mode == "public" && c.n_folds > 9) errors.push_back("n_folds: public mode allows at most 9");
  if (c.repetitions == 0) errors.push_back("repetitions: must be positive");
  if (c.jobs == 0) errors.push_back("jobs: must be positive");
  if ((c.hidden1 == 0) != (c.hidden2 == 0)) errors.push_back("hidden1/hidden2: set both or neither");
  if (c.disable_self_supervised && c.self_supervised_un_only) {
    errors.push_back("disable_self_supervised and self_supervised_un_only are mutually exclusive");
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

/// Hyperparameters for data of the given shape; explicit channels/length must agree.
inline HyperParams hyperparams_for(const RunConfig& c, std::size_t channels, std::size_t length) {
  std::vector<std::string> errors;
  if (c.channels && c.channels != channels) {
    errors.push_back(detail::concat("channels: config says ", c.channels, ", data has ", channels));
  }
  if (c.length && c.length != length) errors.push_back(detail::concat("length: config says ", c.length, ", data has ", length));
  if (!errors.empty()) {
    std::string msg = "configuration does not match the data:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  HyperParams hp = HyperParams::for_input(channels, length);
  if (c.hidden1) {
    hp.hidden1 = c.hidden1;
    hp.hidden2 = c.hidden2;
  }
  hp.filters = c.filters;
  hp.lr = c.lr;
  hp.max_epochs = c.max_epochs;
  hp.patience = c.patience;
  hp.min_delta = c.min_delta;
  hp.activation = c.activation == "sigmoid" ? Activation::sigmoid : Activation::linear;
  hp.validate();
  return hp;
}

inline exp::PipelineOptions pipeline_options(const RunConfig& c, const HyperParams& hp) {
  exp::PipelineOptions o;
  o.stage.hp = hp;
  o.stage.ssl = c.ssl();
  o.stage.ssl_epochs = c.ssl_epochs;
  o.stage.jobs = c.jobs;
  o.n_folds = c.n_folds;
  o.ppg = {c.n_folds, c.test_tp, c.test_tn, c.train_un, c.heldout};
  o.noise_ratio = c.noise_ratio;
  o.shuffle_noise = c.shuffle_noise;
  o.skip_cl = c.skip_cl;
  o.seed = *c.seed;
  return o;
}

}  // namespace tnanet::run
