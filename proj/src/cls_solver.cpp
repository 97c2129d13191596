#include "ioc/cls_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ioc {

namespace {

using Index = Eigen::Index;

Matrix take_columns(const Matrix& A, const std::vector<int>& cols) {
  Matrix out(A.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = A.col(cols[j]);
  return out;
}

void validate(const ClsProblem& P) {
  const auto z = static_cast<int>(P.A.cols());
  if (!P.A.allFinite()) throw std::invalid_argument("solve_cls: A has non-finite entries");
  if (P.anchor_index < 0 || P.anchor_index >= z) {
    throw std::out_of_range("solve_cls: anchor index " + std::to_string(P.anchor_index) +
                            " out of range");
  }
  if (P.anchor_value == 0.0 || !std::isfinite(P.anchor_value)) {
    throw std::invalid_argument("solve_cls: anchor value must be finite and nonzero");
  }
  std::vector<bool> seen(static_cast<std::size_t>(z), false);
  for (int j : P.nonneg) {
    if (j < 0 || j >= z) {
      throw std::out_of_range("solve_cls: nonnegative index " + std::to_string(j) +
                              " out of range");
    }
    if (seen[static_cast<std::size_t>(j)]) {
      throw std::invalid_argument("solve_cls: duplicate nonnegative index " + std::to_string(j));
    }
    seen[static_cast<std::size_t>(j)] = true;
  }
  if (seen[static_cast<std::size_t>(P.anchor_index)] && P.anchor_value < 0.0) {
    throw std::invalid_argument("solve_cls: negative anchor on a nonnegative coordinate");
  }
}

// min ||R y + d|| s.t. y >= 0 (Lawson-Hanson). R is small and square after
// compression, so the passive-set subproblems are solved directly.
Vector nnls(const Matrix& R, const Vector& d, double tol) {
  const Index s = R.cols();
  Vector y = Vector::Zero(s);
  std::vector<bool> passive(static_cast<std::size_t>(s), false);
  const int max_outer = 3 * static_cast<int>(s) + 30;
  for (int outer = 0; outer < max_outer; ++outer) {
    const Vector w = -R.transpose() * (R * y + d);
    Index enter = -1;
    double best = tol;
    for (Index j = 0; j < s; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w[j] > best) {
        best = w[j];
        enter = j;
      }
    }
    if (enter < 0) break;
    passive[static_cast<std::size_t>(enter)] = true;

    for (int inner = 0; inner <= static_cast<int>(s); ++inner) {
      std::vector<int> P;
      for (Index j = 0; j < s; ++j) {
        if (passive[static_cast<std::size_t>(j)]) P.push_back(static_cast<int>(j));
      }
      const Matrix Rp = take_columns(R, P);
      const Vector zp = Eigen::CompleteOrthogonalDecomposition<Matrix>(Rp).solve(-d);
      bool feasible = true;
      for (Index a = 0; a < zp.size(); ++a) feasible = feasible && zp[a] > 0.0;
      if (feasible) {
        y.setZero();
        for (std::size_t a = 0; a < P.size(); ++a) y[P[a]] = zp[static_cast<Index>(a)];
        break;
      }
      double alpha = 1.0;
      for (std::size_t a = 0; a < P.size(); ++a) {
        const double za = zp[static_cast<Index>(a)];
        if (za <= 0.0) {
          const double ya = y[P[a]];
          alpha = std::min(alpha, ya / (ya - za));
        }
      }
      for (std::size_t a = 0; a < P.size(); ++a) {
        y[P[a]] += alpha * (zp[static_cast<Index>(a)] - y[P[a]]);
      }
      const double floor = 1e-14 * (1.0 + y.lpNorm<Eigen::Infinity>());
      for (int j : P) {
        if (y[j] <= floor) {
          y[j] = 0.0;
          passive[static_cast<std::size_t>(j)] = false;
        }
      }
    }
  }
  return y;
}

}  // namespace

ClsSolution solve_cls(const ClsProblem& P) {
  validate(P);
  const Matrix& A = P.A;
  const auto z = static_cast<int>(A.cols());
  std::vector<bool> is_nonneg(static_cast<std::size_t>(z), false);
  for (int j : P.nonneg) is_nonneg[static_cast<std::size_t>(j)] = true;

  std::vector<int> free_cols;
  std::vector<int> nonneg_cols;
  for (int j = 0; j < z; ++j) {
    if (j == P.anchor_index) continue;
    (is_nonneg[static_cast<std::size_t>(j)] ? nonneg_cols : free_cols).push_back(j);
  }

  const Vector b0 = P.anchor_value * A.col(P.anchor_index);
  const Matrix AF = take_columns(A, free_cols);
  const Matrix AS = take_columns(A, nonneg_cols);
  const double normA = A.norm();

  ClsSolution out;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
  Matrix projected(A.rows(), AS.cols() + 1);
  projected << AS, b0;
  if (!free_cols.empty()) {
    cod.setThreshold(1e-12);
    cod.compute(AF);
    out.rank_deficient = cod.rank() < AF.cols();
    // Project [A_S, b0] onto the orthogonal complement of range(A_F).
    Matrix T = cod.householderQ().transpose() * projected;
    T.topRows(cod.rank()).setZero();
    projected = cod.householderQ() * T;
  }

  Vector y_nonneg = Vector::Zero(AS.cols());
  if (AS.cols() > 0) {
    // Compress to a square triangular system with the same residual norms.
    Eigen::HouseholderQR<Matrix> qr(projected);
    const Index k = std::min<Index>(projected.rows(), projected.cols());
    Matrix Rfull = Matrix::Zero(projected.cols(), projected.cols());
    Rfull.topRows(k) = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    const Matrix R = Rfull.leftCols(AS.cols());
    const Vector d = Rfull.col(AS.cols());
    const double tol = 1e-13 * std::max(1.0, normA) * std::max(1.0, d.norm());
    y_nonneg = nnls(R, d, tol);
  }

  Vector beta = Vector::Zero(z);
  beta[P.anchor_index] = P.anchor_value;
  for (std::size_t a = 0; a < nonneg_cols.size(); ++a) {
    beta[nonneg_cols[a]] = y_nonneg[static_cast<Index>(a)];
  }
  if (!free_cols.empty()) {
    const Vector rhs = -(AS * y_nonneg + b0);
    const Vector y_free = cod.solve(rhs);
    for (std::size_t a = 0; a < free_cols.size(); ++a) {
      beta[free_cols[a]] = y_free[static_cast<Index>(a)];
    }
  }

  const Vector r = A * beta;
  out.beta = beta;
  out.residual_norm = r.norm();
  out.active_mask.assign(static_cast<std::size_t>(z), false);
  for (int j : nonneg_cols) out.active_mask[static_cast<std::size_t>(j)] = beta[j] == 0.0;

  const Vector grad = A.transpose() * r;
  const double scale = std::max(1e-300, std::max(1.0, normA) * std::max(1.0, out.residual_norm));
  double violation = 0.0;
  for (int j = 0; j < z; ++j) {
    if (j == P.anchor_index) continue;
    const bool at_bound = is_nonneg[static_cast<std::size_t>(j)] && beta[j] == 0.0;
    const double v = at_bound ? std::max(0.0, -grad[j]) : std::abs(grad[j]);
    violation = std::max(violation, v / scale);
  }
  out.kkt_violation = violation;
  return out;
}

}  // namespace ioc
