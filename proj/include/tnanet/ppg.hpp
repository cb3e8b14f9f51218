#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tnanet/feature_matrix.hpp"
#include "tnanet/signal.hpp"

// PPG front end: raw recording -> 38 x 70 normalized window-feature matrix.
namespace tnanet::ppg {

inline constexpr std::size_t kFeatureCount = 38;
inline constexpr std::size_t kWindowCount = 70;
inline constexpr double kWindowSeconds = 20.0;
inline constexpr double kOverlap = 0.8;
inline constexpr int kFilterOrder = 3;
inline constexpr double kPassLowHz = 0.6;
inline constexpr double kPassHighHz = 5.0;
inline constexpr double kMaxBpm = 220.0;

inline const std::array<std::string, kFeatureCount>& feature_names() {
  static const std::array<std::string, kFeatureCount> names = {
      "mean T1",  "mean T2",  "mean T",   "mean RTR", "mean A1",   "mean A2",        "mean A",
      "mean RAR", "mean H1",  "mean H2",  "mean RPR", "mean amplitude", "mean IBI",
      "std T1",   "std T2",   "std T",    "std A1",   "std A2",    "std A",          "std H1",
      "std H2",   "std RTR",  "std RAR",  "std RPR",  "std amplitude",
      "SDNN",     "RMSSD",    "pNN20",    "pNN50",    "energy",    "time duration",  "bandwidth",
      "time-bandwidth product", "heart rate", "entropy", "S", "SD1", "SD2"};
  return names;
}

struct RawRecording {
  std::string subject_id;
  double sample_rate = 100.0;
  std::vector<double> static_phase;
  std::vector<double> stimulation_phase;

  void validate() const {
    if (!(sample_rate > 0.0)) throw DataError(subject_id + ": sample rate must be positive");
    if (static_phase.empty() || stimulation_phase.empty()) throw DataError(subject_id + ": empty recording phase");
    auto finite = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(static_phase) || !finite(stimulation_phase)) throw DataError(subject_id + ": non-finite sample");
  }
};

/// Complete beats only: feet[i] < peaks[i] < feet[i + 1], so feet.size() == peaks.size() + 1.
/// all_peaks keeps every detected peak (including the partial first and last
/// beats) since inter-beat intervals only need consecutive peaks.
struct BeatAnnotations {
  std::vector<std::size_t> feet;
  std::vector<std::size_t> peaks;
  std::vector<std::size_t> all_peaks;

  std::size_t beat_count() const { return peaks.size(); }

  bool interleaved() const {
    if (feet.size() != peaks.size() + 1) return false;
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      if (!(feet[i] < peaks[i] && peaks[i] < feet[i + 1])) return false;
    }
    return true;
  }
};

class BeatDetectionFailure : public DataError {
 public:
  using DataError::DataError;
};

// ---------------------------------------------------------------------------

inline std::vector<double> bandpass_filter(std::span<const double> signal, double fs) {
  if (!(fs > 10.0)) throw DataError(detail::concat("bandpass_filter: sample rate ", fs, " Hz is too low"));
  static thread_local std::optional<std::pair<double, signal::SosFilter>> cached;
  if (!cached || cached->first != fs) {
    cached.emplace(fs, signal::butterworth_bandpass(kFilterOrder, kPassLowHz, kPassHighHz, fs));
  }
  return signal::sosfiltfilt(cached->second, signal);
}

inline std::vector<double> baseline_subtract(std::span<const double> stimulation, std::span<const double> static_phase) {
  if (static_phase.empty()) throw DataError("baseline_subtract: empty static phase");
  const double mean = std::accumulate(static_phase.begin(), static_phase.end(), 0.0) /
                      static_cast<double>(static_phase.size());
  std::vector<double> out(stimulation.begin(), stimulation.end());
  for (auto& v : out) v -= mean;
  return out;
}

inline std::size_t window_count(std::size_t length, std::size_t window, std::size_t hop) {
  if (length < window) return 0;
  return (length - window) / hop + 1;
}

struct WindowSpec {
  std::size_t length = 0;  // samples
  std::size_t hop = 0;
};

inline WindowSpec window_spec(double fs, double window_s = kWindowSeconds, double overlap = kOverlap) {
  WindowSpec w;
  w.length = static_cast<std::size_t>(std::llround(window_s * fs));
  w.hop = static_cast<std::size_t>(std::llround(window_s * (1.0 - overlap) * fs));
  if (w.length == 0 || w.hop == 0) throw ConfigError("window length and hop must be at least one sample");
  return w;
}

inline std::vector<std::vector<double>> segment_windows(std::span<const double> signal, double fs,
                                                        double window_s = kWindowSeconds, double overlap = kOverlap,
                                                        std::size_t clip_to = kWindowCount) {
  const WindowSpec w = window_spec(fs, window_s, overlap);
  const std::size_t available = window_count(signal.size(), w.length, w.hop);
  if (available < clip_to) {
    throw DataError(detail::concat("insufficient windows: ", available, " available, ", clip_to, " required"));
  }
  std::vector<std::vector<double>> out;
  out.reserve(clip_to);
  for (std::size_t k = 0; k < clip_to; ++k) {
    auto first = signal.begin() + static_cast<std::ptrdiff_t>(k * w.hop);
    out.emplace_back(first, first + static_cast<std::ptrdiff_t>(w.length));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Beat detection: peaks are the maxima of the runs where the signal exceeds a
// centred 0.75 s rolling mean raised by a fraction of the signal's level above
// its minimum. Several raise levels are tried and the one giving the most
// regular inter-beat intervals within 40-180 bpm wins.

namespace detail_beats {

inline std::vector<double> rolling_mean(std::span<const double> x, std::size_t half) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

inline std::vector<std::size_t> pick_peaks(std::span<const double> x, std::span<const double> threshold,
                                           std::size_t min_distance) {
  std::vector<std::size_t> peaks;
  const std::size_t n = x.size();
  std::size_t i = 0;
  while (i < n) {
    if (x[i] > threshold[i]) {
      std::size_t best = i;
      while (i < n && x[i] > threshold[i]) {
        if (x[i] > x[best]) best = i;
        ++i;
      }
      // a run touching the window edge may be a truncated beat; it still
      // marks a peak position for interval purposes only if interior
      if (best > 0 && best + 1 < n) {
        if (!peaks.empty() && best - peaks.back() < min_distance) {
          if (x[best] > x[peaks.back()]) peaks.back() = best;
        } else {
          peaks.push_back(best);
        }
      }
    } else {
      ++i;
    }
  }
  return peaks;
}

inline double rr_std(const std::vector<std::size_t>& peaks, double fs) {
  std::vector<double> rr;
  for (std::size_t i = 1; i < peaks.size(); ++i) rr.push_back(static_cast<double>(peaks[i] - peaks[i - 1]) / fs);
  const double m = std::accumulate(rr.begin(), rr.end(), 0.0) / static_cast<double>(rr.size());
  double ss = 0.0;
  for (double r : rr) ss += (r - m) * (r - m);
  return std::sqrt(ss / static_cast<double>(rr.size()));
}

}  // namespace detail_beats

inline BeatAnnotations detect_beats(std::span<const double> window, double fs) {
  using namespace detail_beats;
  const std::size_t n = window.size();
  if (n < 3) throw BeatDetectionFailure("window too short for beat detection");
  const auto [mn_it, mx_it] = std::minmax_element(window.begin(), window.end());
  const double lo = *mn_it, hi = *mx_it;
  if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(hi)))) throw BeatDetectionFailure("flat window, no beats");

  const std::size_t half = static_cast<std::size_t>(std::llround(0.75 * fs / 2.0));
  const std::vector<double> base = rolling_mean(window, half);
  const double level = std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(n) - lo;
  const std::size_t min_distance = static_cast<std::size_t>(std::ceil(60.0 / kMaxBpm * fs));

  static constexpr std::array<double, 18> raise_pct = {0,  5,  10, 15, 20, 25,  30,  40,  50,
                                                       60, 70, 80, 90, 100, 110, 120, 150, 200};
  std::optional<std::vector<std::size_t>> best;
  double best_sd = 0.0;
  std::vector<double> thr(n);
  for (double pct : raise_pct) {
    const double raise = level * pct / 100.0;
    for (std::size_t i = 0; i < n; ++i) thr[i] = base[i] + raise;
    auto peaks = pick_peaks(window, thr, min_distance);
    if (peaks.size() < 4) continue;
    const double mean_rr = static_cast<double>(peaks.back() - peaks.front()) / fs / static_cast<double>(peaks.size() - 1);
    const double bpm = 60.0 / mean_rr;
    if (bpm < 40.0 || bpm > 180.0) continue;
    const double sd = rr_std(peaks, fs);
    if (!best || sd < best_sd) {
      best = std::move(peaks);
      best_sd = sd;
    }
  }
  if (!best) throw BeatDetectionFailure("fewer than two complete beats detected");

  BeatAnnotations ann;
  ann.all_peaks = *best;
  const auto& p = ann.all_peaks;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    auto first = window.begin() + static_cast<std::ptrdiff_t>(p[i]) + 1;
    auto last = window.begin() + static_cast<std::ptrdiff_t>(p[i + 1]);
    ann.feet.push_back(static_cast<std::size_t>(std::min_element(first, last) - window.begin()));
  }
  // complete beats are the interior peaks, bracketed by feet on both sides
  ann.peaks.assign(p.begin() + 1, p.end() - 1);
  if (ann.peaks.size() < 2) throw BeatDetectionFailure("fewer than two complete beats detected");
  return ann;
}

// ---------------------------------------------------------------------------
// Heart-rate variability statistics on an IBI series in milliseconds.

struct HrvStats {
  double sdnn = 0.0;
  double rmssd = 0.0;
  double pnn20 = 0.0;
  double pnn50 = 0.0;
  double sd1 = 0.0;
  double sd2 = 0.0;
  double s = 0.0;
};

namespace detail_stats {

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// population standard deviation
inline double stddev(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace detail_stats

inline HrvStats hrv_stats(std::span<const double> ibi_ms) {
  using detail_stats::stddev;
  HrvStats h;
  if (ibi_ms.empty()) return h;
  h.sdnn = stddev(ibi_ms);
  if (ibi_ms.size() < 2) return h;
  double sq = 0.0;
  std::size_t n20 = 0, n50 = 0;
  std::vector<double> minus, plus;
  for (std::size_t i = 0; i + 1 < ibi_ms.size(); ++i) {
    const double d = ibi_ms[i + 1] - ibi_ms[i];
    sq += d * d;
    if (std::abs(d) > 20.0) ++n20;
    if (std::abs(d) > 50.0) ++n50;
    minus.push_back((ibi_ms[i] - ibi_ms[i + 1]) / std::numbers::sqrt2);
    plus.push_back((ibi_ms[i] + ibi_ms[i + 1]) / std::numbers::sqrt2);
  }
  h.rmssd = std::sqrt(sq / static_cast<double>(ibi_ms.size() - 1));
  // successive-difference counts over the number of intervals
  h.pnn20 = static_cast<double>(n20) / static_cast<double>(ibi_ms.size());
  h.pnn50 = static_cast<double>(n50) / static_cast<double>(ibi_ms.size());
  h.sd1 = stddev(minus);
  h.sd2 = stddev(plus);
  h.s = std::numbers::pi * h.sd1 * h.sd2;
  return h;
}

/// Shannon entropy (bits) of a 10-bin histogram spanning [min, max] of the values.
inline double histogram_entropy(std::span<const double> v, std::size_t bins = 10) {
  if (v.size() < 2) return 0.0;
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double lo = *mn, range = *mx - *mn;
  if (range <= 0.0) return 0.0;
  std::vector<std::size_t> counts(bins, 0);
  for (double x : v) {
    auto b = static_cast<std::size_t>((x - lo) / range * static_cast<double>(bins));
    ++counts[std::min(b, bins - 1)];
  }
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(v.size());
    h -= p * std::log2(p);
  }
  return h;
}

// ---------------------------------------------------------------------------

namespace detail_features {

inline double safe_ratio(double num, double den, const char* what) {
  if (den == 0.0) {
    Log::warn(what, ": zero denominator, ratio set to 0");
    return 0.0;
  }
  return num / den;
}

}  // namespace detail_features

/// The 38 per-window features, in feature_names() order.
inline std::array<double, kFeatureCount> extract_window_features(std::span<const double> x,
                                                                 const BeatAnnotations& beats, double fs) {
  using detail_features::safe_ratio;
  using detail_stats::mean;
  using detail_stats::stddev;
  if (beats.beat_count() < 2 || !beats.interleaved()) {
    throw BeatDetectionFailure("feature extraction needs at least two complete, interleaved beats");
  }
  const std::size_t m = beats.beat_count();
  std::vector<double> t1(m), t2(m), tt(m), rtr(m), a1(m), a2(m), aa(m), rar(m), h1(m), h2(m), rpr(m), amp(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t f = beats.feet[i], q = beats.peaks[i], g = beats.feet[i + 1];
    t1[i] = static_cast<double>(q - f) / fs;
    t2[i] = static_cast<double>(g - q) / fs;
    tt[i] = static_cast<double>(g - f) / fs;
    rtr[i] = safe_ratio(t1[i], t2[i], "RTR");
    // areas above the straight line joining the two feet, trapezoidal rule
    const double xf = x[f], xg = x[g];
    auto above = [&](std::size_t k) {
      return x[k] - (xf + (xg - xf) * static_cast<double>(k - f) / static_cast<double>(g - f));
    };
    double rise = 0.0, fall = 0.0;
    for (std::size_t k = f; k < q; ++k) rise += 0.5 * (above(k) + above(k + 1)) / fs;
    for (std::size_t k = q; k < g; ++k) fall += 0.5 * (above(k) + above(k + 1)) / fs;
    a1[i] = rise;
    a2[i] = fall;
    aa[i] = rise + fall;
    rar[i] = safe_ratio(a1[i], a2[i], "RAR");
    h1[i] = x[q] - xf;
    h2[i] = x[q] - xg;
    rpr[i] = safe_ratio(h1[i], h2[i], "RPR");
    double s = 0.0;
    for (std::size_t k = f; k <= g; ++k) s += std::abs(x[k]);
    amp[i] = s / static_cast<double>(g - f + 1);
  }

  std::vector<double> ibi;
  for (std::size_t i = 0; i + 1 < beats.all_peaks.size(); ++i) {
    ibi.push_back(static_cast<double>(beats.all_peaks[i + 1] - beats.all_peaks[i]) / fs * 1000.0);
  }
  const HrvStats hrv = hrv_stats(ibi);

  double energy = 0.0, diff_energy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    energy += x[k] * x[k];
    if (k > 0) diff_energy += (x[k] - x[k - 1]) * (x[k] - x[k - 1]);
  }
  const double duration = static_cast<double>(x.size()) / fs;
  const double bandwidth = safe_ratio(diff_energy, energy, "bandwidth");
  const double mean_ibi = mean(ibi);

  return {mean(t1),   mean(t2),   mean(tt),   mean(rtr),  mean(a1),    mean(a2),
          mean(aa),   mean(rar),  mean(h1),   mean(h2),   mean(rpr),   mean(amp),
          mean_ibi,   stddev(t1), stddev(t2), stddev(tt), stddev(a1),  stddev(a2),
          stddev(aa), stddev(h1), stddev(h2), stddev(rtr), stddev(rar), stddev(rpr),
          stddev(amp), hrv.sdnn,  hrv.rmssd,  hrv.pnn20,  hrv.pnn50,   energy,
          duration,   bandwidth,  duration * bandwidth,
          safe_ratio(60000.0, mean_ibi, "heart rate"),  // beats per 60 s from the mean interval
          histogram_entropy(ibi), hrv.s, hrv.sd1, hrv.sd2};
}

/// Per-feature min-max scaling across an individual's windows; constant rows become 0.5.
inline FeatureMatrix minmax_normalize(FeatureMatrix m) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto row = m.row(r);
    const auto [mn, mx] = std::minmax_element(row.begin(), row.end());
    const double lo = *mn, hi = *mx;
    const double range = hi - lo;
    if (!(range > 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)}))) {
      std::fill(row.begin(), row.end(), 0.5);
      continue;
    }
    for (auto& v : row) v = std::clamp((v - lo) / range, 0.0, 1.0);
  }
  return m;
}

struct PreprocessStats {
  std::size_t windows_used = 0;
  std::size_t failed_windows = 0;
};

inline FeatureMatrix build_feature_matrix(const RawRecording& rec, PreprocessStats* stats = nullptr) {
  rec.validate();
  const double fs = rec.sample_rate;
  const std::vector<double> stat = bandpass_filter(rec.static_phase, fs);
  const std::vector<double> stim = bandpass_filter(rec.stimulation_phase, fs);
  const std::vector<double> adjusted = baseline_subtract(stim, stat);
  std::vector<std::vector<double>> windows;
  try {
    windows = segment_windows(adjusted, fs);
  } catch (const DataError& e) {
    throw DataError(rec.subject_id + ": " + e.what());
  }

  std::vector<std::optional<std::array<double, kFeatureCount>>> feats(windows.size());
  std::size_t failed = 0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    try {
      const BeatAnnotations beats = detect_beats(windows[w], fs);
      feats[w] = extract_window_features(windows[w], beats, fs);
    } catch (const BeatDetectionFailure& e) {
      ++failed;
      Log::warn(rec.subject_id, ": window ", w, ": ", e.what());
    }
  }
  if (failed == windows.size()) throw DataError(rec.subject_id + ": beat detection failed in every window");

  // fill failed windows from the nearest earlier valid window, else the nearest later one
  for (std::size_t w = 0; w < feats.size(); ++w) {
    if (feats[w]) continue;
    std::optional<std::size_t> src;
    for (std::size_t k = w; k-- > 0;) {
      if (feats[k]) {
        src = k;
        break;
      }
    }
    if (!src) {
      for (std::size_t k = w + 1; k < feats.size(); ++k) {
        if (feats[k]) {
          src = k;
          break;
        }
      }
    }
    feats[w] = feats[*src];
  }

  FeatureMatrix m(kFeatureCount, windows.size());
  m.names.assign(feature_names().begin(), feature_names().end());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (std::size_t d = 0; d < kFeatureCount; ++d) m.at(d, w) = (*feats[w])[d];
  }
  if (stats) {
    stats->windows_used = windows.size();
    stats->failed_windows = failed;
  }
  return minmax_normalize(std::move(m));
}

// ---------------------------------------------------------------------------
// File formats.
//
// Raw recording: line 1 "fs=<Hz>", line 2 static-phase samples, line 3
// stimulation-phase samples; samples space-separated.
//
// Feature file: a header line "# " followed by the comma-separated feature
// names, then one line per feature with the window values space-separated.

inline RawRecording read_raw_recording(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  RawRecording rec;
  rec.subject_id = path.stem().string();
  std::string line;
  if (!std::getline(in, line) || line.rfind("fs=", 0) != 0) {
    throw DataError(path.string() + ": first line must be fs=<Hz>");
  }
  rec.sample_rate = parse_double(std::string_view(line).substr(3));
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing static-phase line");
  rec.static_phase = parse_doubles(line, ' ');
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing stimulation-phase line");
  rec.stimulation_phase = parse_doubles(line, ' ');
  rec.validate();
  return rec;
}

inline void write_samples(std::ostream& out, std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out << ' ';
    out << format_double(v[i]);
  }
  out << '\n';
}

inline void write_raw_recording(const std::filesystem::path& path, const RawRecording& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "fs=" << format_double(rec.sample_rate) << '\n';
  write_samples(out, rec.static_phase);
  write_samples(out, rec.stimulation_phase);
}

inline void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# ";
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (r) out << ',';
    out << (r < m.names.size() ? m.names[r] : "f" + std::to_string(r));
  }
  out << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) write_samples(out, m.row(r));
}

inline FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw DataError(path.string() + ": missing feature-name header");
  }
  FeatureMatrix m;
  {
    std::string_view names(line);
    names.remove_prefix(2);
    std::size_t start = 0;
    while (true) {
      const std::size_t end = names.find(',', start);
      m.names.emplace_back(names.substr(start, end == std::string_view::npos ? end : end - start));
      if (end == std::string_view::npos) break;
      start = end + 1;
    }
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto vals = parse_doubles(line, ' ');
    if (m.rows == 0) m.cols = vals.size();
    if (vals.size() != m.cols || vals.empty()) throw DataError(path.string() + ": ragged feature rows");
    m.values.insert(m.values.end(), vals.begin(), vals.end());
    ++m.rows;
  }
  if (m.rows != m.names.size()) {
    throw DataError(detail::concat(path.string(), ": header lists ", m.names.size(), " features but ", m.rows,
                                   " rows follow"));
  }
  return m;
}

}  // namespace tnanet::ppg
