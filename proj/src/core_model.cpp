#include "ioc/core_model.hpp"

#include <string>

namespace ioc {

namespace {

std::string shape(const Matrix& A) {
  return std::to_string(A.rows()) + "x" + std::to_string(A.cols());
}

}  // namespace

void OcpSpec::validate() const {
  if (n <= 0 || m <= 0 || N <= 0 || q <= 0 || p < 0) {
    throw DimensionError("ocp '" + name + "': dimensions must be positive");
  }
  if (x0.size() != n) {
    throw DimensionError("ocp '" + name + "': x0 has " + std::to_string(x0.size()) +
                         " entries, expected " + std::to_string(n));
  }
  if (H.rows() != p || H.cols() != n + m) {
    throw DimensionError("ocp '" + name + "': H is " + shape(H) + ", expected " +
                         std::to_string(p) + "x" + std::to_string(n + m));
  }
  if (h.size() != p) {
    throw DimensionError("ocp '" + name + "': h has " + std::to_string(h.size()) +
                         " entries, expected " + std::to_string(p));
  }
  if (!dynamics.residual || !dynamics.jacobian || !features.value || !features.jacobian) {
    throw std::invalid_argument("ocp '" + name + "': dynamics and features must be set");
  }
  const Vector u = Vector::Zero(m);
  if (features.value(x0, u).size() != q) {
    throw DimensionError("ocp '" + name + "': feature map does not return q entries");
  }
  if (dynamics.residual(x0, x0, u).size() != n) {
    throw DimensionError("ocp '" + name + "': residual does not return n entries");
  }
  if (theta_true && theta_true->size() != q) {
    throw DimensionError("ocp '" + name + "': theta_true does not have q entries");
  }
}

Trajectory::Trajectory(int n, int m, int N)
    : n_(n), m_(m), N_(N), X_(Vector::Zero(n * (N + 1))), U_(Vector::Zero(m * N)) {}

Trajectory::Trajectory(int n, int m, int N, Vector X, Vector U)
    : n_(n), m_(m), N_(N), X_(std::move(X)), U_(std::move(U)) {
  if (X_.size() != n * (N + 1) || U_.size() != m * N) {
    throw DimensionError("trajectory: X has " + std::to_string(X_.size()) + " and U has " +
                         std::to_string(U_.size()) + " entries for n=" + std::to_string(n) +
                         ", m=" + std::to_string(m) + ", N=" + std::to_string(N));
  }
}

Trajectory Trajectory::from_stages(int n, int m, int N, const Vector& T, const Vector& x_final) {
  if (T.size() != (n + m) * N || x_final.size() != n) {
    throw DimensionError("trajectory: stage vector has wrong length");
  }
  Trajectory traj(n, m, N);
  for (int k = 0; k < N; ++k) {
    traj.set_state(k, T.segment(k * (n + m), n));
    traj.set_input(k, T.segment(k * (n + m) + n, m));
  }
  traj.set_state(N, x_final);
  return traj;
}

Vector Trajectory::stage(int k) const {
  Vector t(n_ + m_);
  t << state(k), input(k);
  return t;
}

Vector Trajectory::T() const {
  Vector t(static_cast<Eigen::Index>(n_ + m_) * N_);
  for (int k = 0; k < N_; ++k) {
    t.segment(k * (n_ + m_), n_ + m_) = stage(k);
  }
  return t;
}

Vector Trajectory::decision() const {
  Vector z(X_.size() + U_.size());
  z << X_, U_;
  return z;
}

void check_dimensions(const OcpSpec& spec, const Trajectory& traj) {
  if (!traj.matches(spec)) {
    throw DimensionError("trajectory (n=" + std::to_string(traj.n()) + ", m=" +
                         std::to_string(traj.m()) + ", N=" + std::to_string(traj.N()) +
                         ") does not match ocp '" + spec.name + "'");
  }
}

Matrix eval_features_sum_jacobian(const OcpSpec& spec, const Trajectory& traj) {
  check_dimensions(spec, traj);
  const int n = spec.n;
  const int m = spec.m;
  Matrix J = Matrix::Zero(spec.num_vars(), spec.q);
  for (int k = 0; k < spec.N; ++k) {
    const Matrix Jk = spec.features.jacobian(traj.state(k), traj.input(k));
    if (Jk.rows() != spec.q || Jk.cols() != n + m) {
      throw DimensionError("feature jacobian is " + shape(Jk));
    }
    J.middleRows(spec.state_index(k), n) += Jk.leftCols(n).transpose();
    J.middleRows(spec.input_index(k), m) += Jk.rightCols(m).transpose();
  }
  return J;
}

Matrix eval_dynamics_jacobian(const OcpSpec& spec, const Trajectory& traj) {
  check_dimensions(spec, traj);
  const int n = spec.n;
  const int m = spec.m;
  Matrix J = Matrix::Zero(spec.num_vars(), n * spec.N);
  for (int k = 0; k < spec.N; ++k) {
    const DynamicsJacobian D = spec.dynamics.jacobian(traj.state(k + 1), traj.state(k), traj.input(k));
    J.block(spec.state_index(k + 1), k * n, n, n) += D.d_next.transpose();
    J.block(spec.state_index(k), k * n, n, n) += D.d_state.transpose();
    J.block(spec.input_index(k), k * n, m, n) += D.d_input.transpose();
  }
  return J;
}

Matrix eval_constraints_jacobian(const OcpSpec& spec, const Trajectory& traj) {
  check_dimensions(spec, traj);
  const int n = spec.n;
  const int m = spec.m;
  const int p = spec.p;
  Matrix J = Matrix::Zero(spec.num_vars(), p * spec.N);
  for (int k = 0; k < spec.N; ++k) {
    J.block(spec.state_index(k), k * p, n, p) = spec.H.leftCols(n).transpose();
    J.block(spec.input_index(k), k * p, m, p) = spec.H.rightCols(m).transpose();
  }
  return J;
}

Matrix eval_gmax_jacobian(const OcpSpec& spec, const Trajectory& traj) {
  Matrix J = eval_constraints_jacobian(spec, traj);
  const Vector g = eval_constraints(spec, traj);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (g[i] < 0.0) J.col(i).setZero();
  }
  return J;
}

Vector eval_dynamics(const OcpSpec& spec, const Trajectory& traj) {
  check_dimensions(spec, traj);
  Vector F(spec.n * spec.N);
  for (int k = 0; k < spec.N; ++k) {
    F.segment(k * spec.n, spec.n) =
        spec.dynamics.residual(traj.state(k + 1), traj.state(k), traj.input(k));
  }
  return F;
}

Vector eval_constraints(const OcpSpec& spec, const Trajectory& traj) {
  check_dimensions(spec, traj);
  Vector G(spec.p * spec.N);
  for (int k = 0; k < spec.N; ++k) {
    G.segment(k * spec.p, spec.p) = spec.H * traj.stage(k) - spec.h;
  }
  return G;
}

Vector eval_gmax(const OcpSpec& spec, const Trajectory& traj) {
  return eval_constraints(spec, traj).cwiseMax(0.0);
}

double eval_objective(const OcpSpec& spec, const Vector& theta, const Trajectory& traj) {
  check_dimensions(spec, traj);
  if (theta.size() != spec.q) throw DimensionError("theta does not have q entries");
  double J = 0.0;
  for (int k = 0; k < spec.N; ++k) {
    J += theta.dot(spec.features.value(traj.state(k), traj.input(k)));
  }
  return J;
}

StepResult step_dynamics(const OcpSpec& spec, const Vector& x, const Vector& u, int stage,
                         const StepOptions& options) {
  StepResult out{x, 0};
  try {
    bool polished = false;
    for (int it = 0; it < options.max_iterations; ++it) {
      const Vector r = spec.dynamics.residual(out.x_next, x, u);
      const Matrix Jn = spec.dynamics.jacobian(out.x_next, x, u).d_next;
      Eigen::PartialPivLU<Matrix> lu(Jn);
      const Vector delta = lu.solve(-r);
      if (!delta.allFinite()) throw StepError(stage, "singular step jacobian");
      out.x_next += delta;
      out.iterations = it + 1;
      if (polished) return out;
      if (delta.lpNorm<Eigen::Infinity>() <= options.tol) polished = true;
    }
  } catch (const StepError&) {
    throw;
  } catch (const std::exception& e) {
    throw StepError(stage, e.what());
  }
  const Vector r = spec.dynamics.residual(out.x_next, x, u);
  if (r.lpNorm<Eigen::Infinity>() <= options.tol) return out;
  throw StepError(stage, "implicit step did not converge in " +
                             std::to_string(options.max_iterations) + " iterations");
}

Trajectory rollout(const OcpSpec& spec, const Vector& U, int* max_iterations,
                   const StepOptions& options) {
  if (U.size() != spec.m * spec.N) throw DimensionError("rollout: U has wrong length");
  Trajectory traj(spec.n, spec.m, spec.N);
  traj.U() = U;
  traj.set_state(0, spec.x0);
  int worst = 0;
  for (int k = 0; k < spec.N; ++k) {
    StepResult step = step_dynamics(spec, traj.state(k), traj.input(k), k, options);
    if (!step.x_next.allFinite()) throw StepError(k, "non-finite state");
    traj.set_state(k + 1, step.x_next);
    worst = std::max(worst, step.iterations);
  }
  if (max_iterations) *max_iterations = worst;
  return traj;
}

}  // namespace ioc
