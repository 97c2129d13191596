#pragma once

#include "ioc/core_model.hpp"

#include <functional>
#include <string>

namespace ioc {

using VectorMap = std::function<Vector(const Vector&)>;

/// Outcome of comparing an analytic Jacobian against central differences.
struct FdReport {
  bool passed = false;
  double max_deviation = 0.0;
  Eigen::Index row = -1;  // location of the largest deviation
  Eigen::Index col = -1;
  std::string message;
};

enum class FdScale {
  absolute,  // |analytic - fd|
  relative,  // |analytic - fd| / max(1, |analytic|)
};

/// Central-difference Jacobian, rows = outputs, cols = inputs.
/// Throws std::domain_error naming the perturbed coordinate if fn is non-finite.
Matrix central_difference_jacobian(const VectorMap& fn, const Vector& point, double step = 1e-6);

/// Passes iff the largest (scaled) entrywise deviation is below tol.
FdReport finite_difference_check(const VectorMap& fn, const Vector& point, const Matrix& analytic,
                                 double tol, FdScale scale = FdScale::absolute,
                                 double step = 1e-6);

}  // namespace ioc
