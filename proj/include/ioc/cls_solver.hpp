#pragma once

#include "ioc/core_model.hpp"

#include <vector>

namespace ioc {

/// minimize ||A beta||  s.t.  beta[nonneg] >= 0,  beta[anchor_index] = anchor_value.
struct ClsProblem {
  Matrix A;
  std::vector<int> nonneg;
  int anchor_index = 0;
  double anchor_value = 1.0;
};

struct ClsSolution {
  Vector beta;
  double residual_norm = 0.0;
  /// Per coordinate: true for a nonnegative coordinate held at zero.
  std::vector<bool> active_mask;
  /// The free block had deficient column rank; beta carries the minimum-norm
  /// free part.
  bool rank_deficient = false;
  /// Largest violation of the optimality conditions, in units of
  /// ||A||_F * max(1, residual_norm).
  double kkt_violation = 0.0;
};

/// Lawson-Hanson active set on the nonnegative block after the anchor has
/// been substituted and the free block projected out by a complete
/// orthogonal decomposition. Entering coordinates are chosen by largest
/// descent, lowest index on ties.
ClsSolution solve_cls(const ClsProblem& problem);

}  // namespace ioc
