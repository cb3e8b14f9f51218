#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "tnanet/tensor.hpp"

namespace tnanet {

/// Per-individual D x T matrix: one row per feature (or channel), one column per window (or time step).
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major
  std::vector<std::string> names;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }

  Tensor as_tensor() const { return Tensor({1, rows, cols}, values); }

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) = default;
};

inline std::vector<std::string> channel_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("ch" + std::to_string(i));
  return out;
}

// Shortest round-trip decimal text for a double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError(detail::concat("not a number: '", s, "'"));
  }
  return v;
}

inline std::vector<double> parse_doubles(std::string_view s, char sep) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(sep, start);
    if (end == std::string_view::npos) end = s.size();
    std::string_view tok = s.substr(start, end - start);
    bool blank = tok.find_first_not_of(" \t\r") == std::string_view::npos;
    if (!blank) out.push_back(parse_double(tok));
    if (end == s.size()) break;
    start = end + 1;
  }
  return out;
}

}  // namespace tnanet
