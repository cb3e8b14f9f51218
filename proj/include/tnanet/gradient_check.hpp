#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "tnanet/tensor.hpp"

namespace tnanet {

struct GradientCheckOptions {
  double step = 1e-5;
  std::size_t coords_per_param = 64;  // parameters with fewer coordinates are checked in full
  double tolerance = 1e-4;
  // Relative errors are measured against max(|analytic|, |numeric|, denominator_floor)
  // so that gradients that are zero up to rounding do not divide by ~0.
  double denominator_floor = 1e-6;
  std::uint64_t seed = 0x5EED;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
  bool passed = true;
  std::vector<std::string> failures;  // one line per parameter over tolerance
};

/// Compares analytic gradients against central finite differences.
///
/// `loss(bool with_grad)` must return the scalar loss at the current parameter
/// values; when `with_grad` is true it must also accumulate the analytic
/// gradient into the parameter gradient buffers. It must not otherwise mutate
/// model state (e.g. batch-norm running statistics) or the check is invalid.
template <typename LossFn>
GradientCheckReport gradient_check(const ParamSet& params, LossFn&& loss, const GradientCheckOptions& opt = {}) {
  params.zero_grad();
  loss(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& e : params) analytic.push_back(e.param->grad);
  params.zero_grad();

  GradientCheckReport report;
  Rng rng(opt.seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k].param;
    const std::size_t n = p.value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > opt.coords_per_param) {
      rng.shuffle(coords);
      coords.resize(opt.coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    double param_worst = 0.0;
    std::size_t param_worst_idx = 0;
    for (auto i : coords) {
      const double orig = p.value[i];
      p.value[i] = orig + opt.step;
      const double up = loss(false);
      p.value[i] = orig - opt.step;
      const double down = loss(false);
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.denominator_floor});
      double rel = std::abs(a - numeric) / denom;
      if (!std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
      ++report.coordinates_checked;
      if (rel > param_worst || !std::isfinite(rel)) {
        param_worst = rel;
        param_worst_idx = i;
      }
      if (rel > report.max_relative_error || !std::isfinite(rel)) {
        report.max_relative_error = rel;
        report.worst_parameter = params[k].name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
    if (!(param_worst <= opt.tolerance)) {
      report.passed = false;
      report.failures.push_back(detail::concat("gradient check failed for ", params[k].name, "[",
                                               param_worst_idx, "]: relative error ", param_worst));
    }
  }
  return report;
}

}  // namespace tnanet
