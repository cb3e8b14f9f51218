#pragma once

#include <algorithm>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tnanet/core.hpp"

namespace tnanet {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    for (auto d : shape_) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
    }
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
    }
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError(detail::concat("tensor shape ", shape_str(shape_), " does not match ",
                                          data_.size(), " values"));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape s) const { return Tensor(std::move(s), data_); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  // Bitwise comparison of shape and payload.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ &&
           (a.data_.empty() ||
            std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0);
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline void require_shape(const Tensor& t, const Shape& expected, std::string_view what) {
  if (t.shape() != expected) {
    throw DimensionError(detail::concat(what, ": expected shape ", shape_str(expected), ", got ",
                                        shape_str(t.shape())));
  }
}

/// A trainable tensor with its gradient buffer.
struct Parameter {
  Tensor value;
  Tensor grad;

  Parameter() = default;
  explicit Parameter(Tensor v) : value(std::move(v)), grad(value.shape(), 0.0) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Ordered, named view over the parameters of a model. Names are unique;
/// the order is the order of registration and is what optimizer state and
/// checkpoints are keyed on.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Parameter* param;
  };

  void add(std::string name, Parameter& p) {
    if (index_of(name) != npos) throw Error("duplicate parameter name: " + name);
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape(), 0.0);
    entries_.push_back({std::move(name), &p});
  }

  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name == name) return i;
    }
    return npos;
  }

  Parameter& get(std::string_view name) const {
    auto i = index_of(name);
    if (i == npos) throw Error(detail::concat("no parameter named ", name));
    return *entries_[i].param;
  }

  void zero_grad() const {
    for (auto& e : entries_) e.param->zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (auto& e : entries_) n += e.param->value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
};

/// Uniform init in +-sqrt(1/fan_in).
inline void init_uniform_fan_in(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

}  // namespace tnanet
