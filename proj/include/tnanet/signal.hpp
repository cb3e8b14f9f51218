#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "tnanet/core.hpp"

namespace tnanet::signal {

/// Second-order section, a[0] normalized to 1.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{1.0, 0.0, 0.0};
};

struct SosFilter {
  std::vector<Biquad> sections;
  int order = 0;  // prototype order
};

/// Digital Butterworth band-pass designed by bilinear transform with
/// pre-warped band edges. The analog prototype's `order` poles become
/// 2*order digital poles, grouped as conjugate pairs into order sections;
/// each section carries one zero at z = 1 and one at z = -1.
inline SosFilter butterworth_bandpass(int order, double low_hz, double high_hz, double fs) {
  if (order < 1) throw ConfigError("butterworth_bandpass: order must be >= 1");
  if (!(fs > 0.0) || !(low_hz > 0.0) || !(high_hz > low_hz) || !(high_hz < fs / 2.0)) {
    throw ConfigError(detail::concat("butterworth_bandpass: invalid band [", low_hz, ", ", high_hz,
                                     "] Hz at fs=", fs));
  }
  using cd = std::complex<double>;
  constexpr double pi = std::numbers::pi;
  const double fs2 = 2.0 * fs;
  const double wl = fs2 * std::tan(pi * low_hz / fs);
  const double wh = fs2 * std::tan(pi * high_hz / fs);
  const double bw = wh - wl;
  const double w0sq = wl * wh;

  // Analog low-pass prototype poles in the upper half plane (plus the real
  // pole for odd orders). Each maps to two band-pass poles.
  std::vector<cd> digital_poles;
  for (int k = 0; k < order; ++k) {
    const double theta = pi * (2.0 * k + order + 1) / (2.0 * order);
    const cd p_lp = std::polar(1.0, theta) * (bw / 2.0);
    const cd disc = std::sqrt(p_lp * p_lp - w0sq);
    for (const cd p_bp : {p_lp + disc, p_lp - disc}) {
      digital_poles.push_back((fs2 + p_bp) / (fs2 - p_bp));
    }
  }
  // Pair each pole with its conjugate: keep the ones with positive imaginary part.
  std::vector<cd> upper;
  for (const auto& p : digital_poles) {
    if (p.imag() > 1e-14) upper.push_back(p);
  }
  std::vector<cd> reals;
  for (const auto& p : digital_poles) {
    if (std::abs(p.imag()) <= 1e-14) reals.push_back(p);
  }
  // a wide band turns the real prototype pole into two real poles; they share a section
  if (reals.size() % 2 != 0 || upper.size() + reals.size() / 2 != static_cast<std::size_t>(order)) {
    throw Error("butterworth_bandpass: unexpected pole layout");
  }

  SosFilter filt;
  filt.order = order;
  for (const auto& p : upper) {
    Biquad s;
    s.b = {1.0, 0.0, -1.0};
    s.a = {1.0, -2.0 * p.real(), std::norm(p)};
    filt.sections.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    Biquad s;
    s.b = {1.0, 0.0, -1.0};
    s.a = {1.0, -(reals[i].real() + reals[i + 1].real()), reals[i].real() * reals[i + 1].real()};
    filt.sections.push_back(s);
  }
  // Normalize to unit gain at the geometric centre frequency, where the
  // analog Butterworth response is exactly 1.
  const double centre = std::atan(std::sqrt(w0sq) / fs2) * 2.0;  // digital rad/sample
  const cd zc = std::polar(1.0, centre);
  cd h{1.0, 0.0};
  for (const auto& s : filt.sections) {
    h *= (s.b[0] + s.b[1] / zc + s.b[2] / (zc * zc)) / (s.a[0] + s.a[1] / zc + s.a[2] / (zc * zc));
  }
  const double gain = 1.0 / std::abs(h);
  for (auto& v : filt.sections.front().b) v *= gain;
  return filt;
}

/// Complex frequency response at f Hz.
inline std::complex<double> frequency_response(const SosFilter& filt, double f_hz, double fs) {
  using cd = std::complex<double>;
  const cd z1 = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs);
  cd h{1.0, 0.0};
  for (const auto& s : filt.sections) {
    h *= (s.b[0] + s.b[1] * z1 + s.b[2] * z1 * z1) / (s.a[0] + s.a[1] * z1 + s.a[2] * z1 * z1);
  }
  return h;
}

/// Direct-form II transposed cascade. `zi` holds two state values per section.
inline std::vector<double> sosfilt(const SosFilter& filt, std::span<const double> x, std::vector<double>* zi = nullptr) {
  const std::size_t ns = filt.sections.size();
  std::vector<double> state = zi ? *zi : std::vector<double>(2 * ns, 0.0);
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t s = 0; s < ns; ++s) {
    const auto& sec = filt.sections[s];
    double z0 = state[2 * s], z1 = state[2 * s + 1];
    for (auto& v : y) {
      const double in = v;
      const double out = sec.b[0] * in + z0;
      z0 = sec.b[1] * in - sec.a[1] * out + z1;
      z1 = sec.b[2] * in - sec.a[2] * out;
      v = out;
    }
    state[2 * s] = z0;
    state[2 * s + 1] = z1;
  }
  if (zi) *zi = state;
  return y;
}

/// Initial states giving the steady-state response to a unit step.
inline std::vector<double> sosfilt_zi(const SosFilter& filt) {
  std::vector<double> zi;
  double scale = 1.0;  // steady-state input level of the current section
  for (const auto& s : filt.sections) {
    const double dc = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
    const double z1 = s.b[2] - s.a[2] * dc;
    const double z0 = s.b[1] - s.a[1] * dc + z1;
    zi.push_back(scale * z0);
    zi.push_back(scale * z1);
    scale *= dc;
  }
  return zi;
}

/// Number of samples reflected at each edge by filtfilt.
inline std::size_t filtfilt_padlen(const SosFilter& filt) { return 3 * (2 * filt.sections.size() + 1); }

/// Zero-phase forward-backward filtering with odd-reflection edge padding
/// and steady-state initial conditions.
inline std::vector<double> sosfiltfilt(const SosFilter& filt, std::span<const double> x) {
  const std::size_t pad = filtfilt_padlen(filt);
  if (x.size() <= pad) {
    throw DataError(detail::concat("signal of ", x.size(), " samples is too short to filter (need more than ",
                                   pad, ")"));
  }
  const std::size_t n = x.size();
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const std::vector<double> zi = sosfilt_zi(filt);
  std::vector<double> state = zi;
  for (auto& v : state) v *= ext.front();
  std::vector<double> fwd = sosfilt(filt, ext, &state);

  std::vector<double> rev(fwd.rbegin(), fwd.rend());
  state = zi;
  for (auto& v : state) v *= rev.front();
  std::vector<double> back = sosfilt(filt, rev, &state);

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = back[back.size() - 1 - (pad + i)];
  return out;
}

}  // namespace tnanet::signal
