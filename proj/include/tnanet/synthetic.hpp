#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "tnanet/feature_matrix.hpp"
#include "tnanet/ppg.hpp"

// Synthetic data sources standing in for recordings that cannot be shared:
// a PPG pulse-train generator with known beat timing, and a two-class
// multichannel slow-cortical-potential generator shaped like the
// SelfRegulationSCP1 archive (6 channels, 896 samples per trial).
namespace tnanet::synth {

enum class PpgClass { negative, positive };

struct PpgProfile {
  double bpm_mean = 72.0;
  double bpm_std = 6.0;   // between-subject spread of the resting rate
  double hrv = 1.0;       // scales every stochastic IBI component
  double response = 0.06; // fractional IBI shortening at the peak of the stimulus response
  double noise = 0.03;    // additive white noise, relative to pulse height
  PpgClass cls = PpgClass::negative;

  static PpgProfile for_class(PpgClass c) {
    PpgProfile p;
    p.cls = c;
    // lower heart-rate variability in the positive class
    p.hrv = c == PpgClass::positive ? 0.35 : 1.0;
    return p;
  }

  void validate() const {
    if (!(bpm_mean >= 40.0 && bpm_mean <= 180.0)) {
      throw ConfigError(detail::concat("bpm ", bpm_mean, " outside [40, 180]"));
    }
    if (!(bpm_std >= 0.0) || !(hrv >= 0.0) || !(noise >= 0.0) || !(response >= 0.0 && response < 0.5)) {
      throw ConfigError("synthetic profile parameters must be non-negative (response < 0.5)");
    }
  }
};

struct PpgTruth {
  double bpm = 0.0;                    // subject resting rate drawn from the profile
  std::vector<double> stim_ibi_s;      // true intervals between beat peaks in the stimulation phase
  double mean_ibi_s = 0.0;
  double sdnn_ms = 0.0;
  double heart_rate = 0.0;
};

struct SyntheticPpg {
  ppg::RawRecording recording;
  PpgTruth truth;
};

namespace detail_ppg {

// Asymmetric pulse: fast systolic rise, slower decay, small dicrotic wave.
inline double pulse_shape(double tau) {
  if (tau < 0.0) return 0.0;
  constexpr double tp = 0.14;
  const double u = tau / tp;
  const double systolic = u * u * std::exp(2.0 * (1.0 - u));
  const double d = (tau - 0.36) / 0.07;
  const double dicrotic = 0.25 * std::exp(-0.5 * d * d);
  return systolic + dicrotic;
}

}  // namespace detail_ppg

/// Pulse train with jittered intervals. The static phase is a resting
/// baseline; during the stimulation phase every subject shares the same
/// slow heart-rate response while the stochastic variability scales with
/// the profile's hrv level.
inline SyntheticPpg generate_synthetic_ppg(const PpgProfile& profile, double stimulation_s, double fs,
                                           std::uint64_t seed, double static_s = 180.0,
                                           const std::string& subject_id = "synthetic") {
  profile.validate();
  if (!(fs > 0.0) || !(stimulation_s > 0.0) || !(static_s > 0.0)) throw ConfigError("durations and fs must be positive");
  Rng rng(seed);
  SyntheticPpg out;
  const double bpm = std::clamp(rng.normal(profile.bpm_mean, profile.bpm_std), 40.0, 180.0);
  out.truth.bpm = bpm;
  const double base = 60.0 / bpm;
  const double total = static_s + stimulation_s;
  const std::size_t n_static = static_cast<std::size_t>(std::llround(static_s * fs));
  const std::size_t n_stim = static_cast<std::size_t>(std::llround(stimulation_s * fs));
  const std::size_t n = n_static + n_stim;

  const double resp_freq = rng.uniform(0.2, 0.3);
  const double resp_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double slow = 0.0;
  std::vector<double> peak_times;
  std::vector<double> beat_amp;
  double t = rng.uniform(0.0, base);
  while (t < total + 2.0) {
    double ibi = base;
    if (t >= static_s) {
      const double tau = (t - static_s) / stimulation_s;
      // rise to peak response mid-stimulation, partial recovery after
      ibi *= 1.0 - profile.response * std::sin(std::numbers::pi * tau) * (1.0 + 0.5 * std::sin(3.0 * std::numbers::pi * tau));
    }
    slow = 0.95 * slow + std::sqrt(1.0 - 0.95 * 0.95) * rng.normal();
    const double rsa = std::sin(2.0 * std::numbers::pi * resp_freq * t + resp_phase);
    ibi += profile.hrv * (0.030 * slow + 0.025 * rsa + 0.020 * rng.normal());
    ibi = std::clamp(ibi, 60.0 / 200.0, 60.0 / 35.0);
    peak_times.push_back(t);
    beat_amp.push_back(1.0 + 0.08 * rsa + 0.03 * rng.normal());
    t += ibi;
  }

  std::vector<double> x(n, 0.0);
  for (std::size_t k = 0; k < peak_times.size(); ++k) {
    // beat onset precedes the systolic peak by the template's time-to-peak
    const double onset = peak_times[k] - 0.14;
    const auto first = static_cast<std::ptrdiff_t>(std::ceil(onset * fs));
    const auto last = static_cast<std::ptrdiff_t>(std::floor((onset + 1.2) * fs));
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(first, 0); i <= last && i < static_cast<std::ptrdiff_t>(n); ++i) {
      x[static_cast<std::size_t>(i)] += beat_amp[k] * detail_ppg::pulse_shape(static_cast<double>(i) / fs - onset);
    }
  }
  const double wander_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = static_cast<double>(i) / fs;
    x[i] += 0.2 * std::sin(2.0 * std::numbers::pi * 0.05 * ti + wander_phase) + profile.noise * rng.normal();
  }

  out.recording.subject_id = subject_id;
  out.recording.sample_rate = fs;
  out.recording.static_phase.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n_static));
  out.recording.stimulation_phase.assign(x.begin() + static_cast<std::ptrdiff_t>(n_static), x.end());

  for (std::size_t k = 0; k + 1 < peak_times.size(); ++k) {
    if (peak_times[k] >= static_s && peak_times[k + 1] < total) {
      out.truth.stim_ibi_s.push_back(peak_times[k + 1] - peak_times[k]);
    }
  }
  const auto& v = out.truth.stim_ibi_s;
  if (!v.empty()) {
    std::vector<double> ms(v.begin(), v.end());
    for (auto& d : ms) d *= 1000.0;
    out.truth.mean_ibi_s = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    out.truth.sdnn_ms = ppg::detail_stats::stddev(ms);
    out.truth.heart_rate = 60.0 / out.truth.mean_ibi_s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Slow-cortical-potential trials. Class 1 carries a slow positive shift on the
// central channels, class 0 a negative one; both ride on 1/f-like background
// activity, an alpha rhythm and per-trial offsets, with an effect size chosen
// so that the task is learnable but far from trivially separable.

struct ScpConfig {
  std::size_t trials = 561;
  std::size_t channels = 6;
  std::size_t length = 896;
  double fs = 256.0;
  double shift = 1.2;       // peak class-dependent shift, in background-noise units
  double background = 1.0;  // std of the slow random-walk background
};

struct LabeledSeries {
  std::string id;
  int label = 0;
  FeatureMatrix series;  // channels x time
};

inline std::vector<LabeledSeries> generate_scp_dataset(const ScpConfig& cfg, std::uint64_t seed) {
  if (cfg.trials == 0 || cfg.channels == 0 || cfg.length < 8) throw ConfigError("invalid SCP dataset shape");
  Rng rng(seed);
  // channel weights of the class effect: strongest on the central pair
  std::vector<double> weight(cfg.channels);
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    const double centre = (static_cast<double>(cfg.channels) - 1.0) / 2.0;
    const double d = (static_cast<double>(c) - centre) / std::max(1.0, centre);
    weight[c] = std::exp(-1.5 * d * d);
  }
  std::vector<LabeledSeries> out;
  out.reserve(cfg.trials);
  const double ar = 0.995;
  const double innov = std::sqrt(1.0 - ar * ar);
  for (std::size_t k = 0; k < cfg.trials; ++k) {
    LabeledSeries s;
    s.id = "trial" + std::to_string(k);
    s.label = static_cast<int>(rng.index(2));
    s.series = FeatureMatrix(cfg.channels, cfg.length);
    s.series.names = channel_names(cfg.channels);
    const double sign = s.label == 1 ? 1.0 : -1.0;
    const double gain = std::max(0.2, rng.normal(1.0, 0.35));  // trial-to-trial strength of regulation
    const double alpha_f = rng.uniform(8.0, 12.0);
    std::vector<double> common(cfg.length);
    double walk = rng.normal();
    for (std::size_t t = 0; t < cfg.length; ++t) {
      walk = ar * walk + innov * rng.normal();
      common[t] = walk;
    }
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      double local = rng.normal();
      const double offset = rng.normal(0.0, 0.5);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t t = 0; t < cfg.length; ++t) {
        local = ar * local + innov * rng.normal();
        const double tau = static_cast<double>(t) / static_cast<double>(cfg.length - 1);
        // shift builds up over the first half of the trial and is held
        const double ramp = std::min(1.0, 2.0 * tau);
        const double effect = sign * gain * cfg.shift * weight[c] * ramp;
        const double alpha = 0.3 * std::sin(2.0 * std::numbers::pi * alpha_f * static_cast<double>(t) / cfg.fs + phase);
        s.series.at(c, t) = effect + cfg.background * (0.6 * common[t] + 0.8 * local) + offset + alpha +
                            0.2 * rng.normal();
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace tnanet::synth
