#include "ioc/finite_difference.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ioc {

Matrix central_difference_jacobian(const VectorMap& fn, const Vector& point, double step) {
  const Vector f0 = fn(point);
  Matrix J(f0.size(), point.size());
  Vector probe = point;
  for (Eigen::Index j = 0; j < point.size(); ++j) {
    probe[j] = point[j] + step;
    const Vector fp = fn(probe);
    probe[j] = point[j] - step;
    const Vector fm = fn(probe);
    probe[j] = point[j];
    if (fp.size() != f0.size() || fm.size() != f0.size()) {
      throw DimensionError("finite difference: output size changed at coordinate " +
                           std::to_string(j));
    }
    if (!fp.allFinite() || !fm.allFinite()) {
      throw std::domain_error("finite difference: non-finite evaluation when perturbing coordinate " +
                              std::to_string(j));
    }
    J.col(j) = (fp - fm) / (2.0 * step);
  }
  return J;
}

FdReport finite_difference_check(const VectorMap& fn, const Vector& point, const Matrix& analytic,
                                 double tol, FdScale scale, double step) {
  FdReport report;
  if (!point.allFinite() || !fn(point).allFinite()) {
    report.message = "non-finite evaluation at the base point";
    report.max_deviation = std::numeric_limits<double>::infinity();
    return report;
  }
  Matrix numeric;
  try {
    numeric = central_difference_jacobian(fn, point, step);
  } catch (const std::domain_error& e) {
    report.message = e.what();
    report.max_deviation = std::numeric_limits<double>::infinity();
    return report;
  }
  if (numeric.rows() != analytic.rows() || numeric.cols() != analytic.cols()) {
    report.message = "analytic jacobian is " + std::to_string(analytic.rows()) + "x" +
                     std::to_string(analytic.cols()) + ", numeric is " +
                     std::to_string(numeric.rows()) + "x" + std::to_string(numeric.cols());
    report.max_deviation = std::numeric_limits<double>::infinity();
    return report;
  }
  for (Eigen::Index j = 0; j < numeric.cols(); ++j) {
    for (Eigen::Index i = 0; i < numeric.rows(); ++i) {
      double dev = std::abs(analytic(i, j) - numeric(i, j));
      if (scale == FdScale::relative) dev /= std::max(1.0, std::abs(analytic(i, j)));
      if (!std::isfinite(dev)) dev = std::numeric_limits<double>::infinity();
      if (dev > report.max_deviation || report.row < 0) {
        report.max_deviation = dev;
        report.row = i;
        report.col = j;
      }
    }
  }
  report.passed = report.max_deviation < tol;
  if (!report.passed) {
    report.message = "deviation " + std::to_string(report.max_deviation) + " at (" +
                     std::to_string(report.row) + ", " + std::to_string(report.col) +
                     ") exceeds " + std::to_string(tol);
  }
  return report;
}

}  // namespace ioc
