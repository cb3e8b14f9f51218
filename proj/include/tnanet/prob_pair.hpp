#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "tnanet/core.hpp"

namespace tnanet {

/// Two-class output probabilities. Index 0 is the negative class, index 1 the positive class.
struct ProbPair {
  std::array<double, 2> p{0.5, 0.5};
  std::optional<int> given_label;

  double negative() const { return p[0]; }
  double positive() const { return p[1]; }

  bool valid(double tol = 1e-9) const {
    return p[0] >= 0.0 && p[1] >= 0.0 && std::abs(p[0] + p[1] - 1.0) <= tol;
  }
};

/// Hard label from a probability pair; ties go to the negative class.
inline int predict_label(const ProbPair& pp) { return pp.p[0] >= pp.p[1] ? 0 : 1; }

}  // namespace tnanet
