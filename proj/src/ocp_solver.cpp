#include "ioc/ocp_solver.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace ioc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Index = Eigen::Index;

// min 0.5 x'Qx + c'x  s.t.  0 <= x <= upper, Q symmetric PSD.
// Primal active-set method; ties are broken towards the lowest index.
struct BoxQpResult {
  Vector x;
  bool bounded = true;
};

BoxQpResult solve_box_qp(const Matrix& Q, const Vector& c, const Vector& upper) {
  enum class Bound { lower, upper, free };
  const Index n = c.size();
  std::vector<Bound> state(static_cast<std::size_t>(n), Bound::lower);
  BoxQpResult out{Vector::Zero(n), true};
  Vector& x = out.x;
  const double tol = 1e-13 * (1.0 + c.lpNorm<Eigen::Infinity>() + Q.lpNorm<Eigen::Infinity>());

  for (int iter = 0; iter < 100 + 20 * static_cast<int>(n); ++iter) {
    std::vector<Index> free;
    for (Index i = 0; i < n; ++i) {
      if (state[static_cast<std::size_t>(i)] == Bound::free) free.push_back(i);
    }
    if (!free.empty()) {
      const auto nf = static_cast<Index>(free.size());
      Matrix Qff(nf, nf);
      Vector rhs(nf);
      Vector x_fixed = x;
      for (Index a = 0; a < nf; ++a) x_fixed[free[a]] = 0.0;
      const Vector coupling = Q * x_fixed;
      for (Index a = 0; a < nf; ++a) {
        rhs[a] = -(c[free[a]] + coupling[free[a]]);
        for (Index b = 0; b < nf; ++b) Qff(a, b) = Q(free[a], free[b]);
      }
      Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Qff);
      Vector y = cod.solve(rhs);
      Vector direction;
      bool ray = false;
      const Vector gap = rhs - Qff * y;
      if (gap.norm() > 1e-10 * (1.0 + rhs.norm())) {
        // No stationary point on this face: the objective decreases linearly
        // along the null-space component of the gradient.
        direction = gap;
        ray = true;
      } else {
        direction = y;
        for (Index a = 0; a < nf; ++a) direction[a] -= x[free[a]];
      }
      double alpha = ray ? kInf : 1.0;
      Index blocking = -1;
      Bound blocking_bound = Bound::lower;
      for (Index a = 0; a < nf; ++a) {
        const Index i = free[a];
        const double d = direction[a];
        if (d < 0.0) {
          const double t = -x[i] / d;
          if (t < alpha) {
            alpha = t;
            blocking = i;
            blocking_bound = Bound::lower;
          }
        } else if (d > 0.0 && std::isfinite(upper[i])) {
          const double t = (upper[i] - x[i]) / d;
          if (t < alpha) {
            alpha = t;
            blocking = i;
            blocking_bound = Bound::upper;
          }
        }
      }
      if (!std::isfinite(alpha)) {
        out.bounded = false;
        return out;
      }
      alpha = std::max(alpha, 0.0);
      for (Index a = 0; a < nf; ++a) {
        const Index i = free[a];
        x[i] = std::clamp(x[i] + alpha * direction[a], 0.0, upper[i]);
      }
      if (blocking >= 0) {
        state[static_cast<std::size_t>(blocking)] = blocking_bound;
        x[blocking] = blocking_bound == Bound::lower ? 0.0 : upper[blocking];
        continue;
      }
    }
    const Vector grad = Q * x + c;
    Index release = -1;
    double worst = tol;
    for (Index i = 0; i < n; ++i) {
      const Bound s = state[static_cast<std::size_t>(i)];
      double violation = 0.0;
      if (s == Bound::lower) violation = -grad[i];
      if (s == Bound::upper) violation = grad[i];
      if (violation > worst) {
        worst = violation;
        release = i;
      }
    }
    if (release < 0) return out;
    state[static_cast<std::size_t>(release)] = Bound::free;
  }
  return out;
}

// Quantities of the reduced problem (states eliminated by the rollout) at one
// input sequence.
struct ReducedModel {
  Trajectory traj;
  double objective = 0.0;
  Vector G;       // pN constraint values
  Matrix S;       // d(decision)/dU, b x mN
  Vector grad;    // reduced objective gradient, mN
  Matrix C;       // reduced constraint jacobian, pN x mN
  std::vector<DynamicsJacobian> jac;
};

ReducedModel evaluate(const OcpSpec& spec, const Vector& theta, const Vector& U,
                      const StepOptions& step) {
  ReducedModel M;
  M.traj = rollout(spec, U, nullptr, step);
  M.objective = eval_objective(spec, theta, M.traj);
  M.G = eval_constraints(spec, M.traj);
  const int n = spec.n;
  const int m = spec.m;
  const int mN = m * spec.N;
  M.S = Matrix::Zero(spec.num_vars(), mN);
  M.S.bottomRows(mN).setIdentity();
  M.jac.reserve(static_cast<std::size_t>(spec.N));
  for (int k = 0; k < spec.N; ++k) {
    M.jac.push_back(
        spec.dynamics.jacobian(M.traj.state(k + 1), M.traj.state(k), M.traj.input(k)));
    const DynamicsJacobian& D = M.jac.back();
    const Matrix rhs = D.d_state * M.S.middleRows(spec.state_index(k), n) +
                       D.d_input * M.S.middleRows(spec.input_index(k), m);
    M.S.middleRows(spec.state_index(k + 1), n) = -D.d_next.partialPivLu().solve(rhs);
  }
  M.grad = M.S.transpose() * (eval_features_sum_jacobian(spec, M.traj) * theta);
  M.C = eval_constraints_jacobian(spec, M.traj).transpose() * M.S;
  return M;
}

// Dynamics multipliers that zero the state rows x_1..x_N of the stationarity
// vector for the given inequality multipliers.
Vector adjoint(const OcpSpec& spec, const Vector& theta, const ReducedModel& M,
               const Vector& lambda) {
  const int n = spec.n;
  Vector a = eval_features_sum_jacobian(spec, M.traj) * theta;
  if (lambda.size() > 0) a += eval_constraints_jacobian(spec, M.traj) * lambda;
  Vector v(n * spec.N);
  Vector carry = Vector::Zero(n);
  for (int j = spec.N; j >= 1; --j) {
    const Vector rhs = a.segment(spec.state_index(j), n) + carry;
    const DynamicsJacobian& D = M.jac[static_cast<std::size_t>(j - 1)];
    v.segment((j - 1) * n, n) = -D.d_next.transpose().partialPivLu().solve(rhs);
    carry = D.d_state.transpose() * v.segment((j - 1) * n, n);
  }
  return v;
}

void scatter(Matrix& target, const std::vector<int>& idx, const Matrix& block) {
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = 0; b < idx.size(); ++b) {
      target(idx[a], idx[b]) += block(static_cast<Index>(a), static_cast<Index>(b));
    }
  }
}

Matrix lagrangian_hessian(const OcpSpec& spec, const Vector& theta, const Trajectory& traj,
                          const Vector& v) {
  const int n = spec.n;
  const int m = spec.m;
  const int b = spec.num_vars();
  Matrix Hl = Matrix::Zero(b, b);
  for (int k = 0; k < spec.N; ++k) {
    std::vector<int> stage_idx;
    for (int i = 0; i < n; ++i) stage_idx.push_back(spec.state_index(k) + i);
    for (int i = 0; i < m; ++i) stage_idx.push_back(spec.input_index(k) + i);
    if (spec.features.weighted_hessian) {
      scatter(Hl, stage_idx, spec.features.weighted_hessian(traj.state(k), traj.input(k), theta));
    }
    if (spec.dynamics.weighted_hessian) {
      std::vector<int> dyn_idx;
      for (int i = 0; i < n; ++i) dyn_idx.push_back(spec.state_index(k + 1) + i);
      for (int i = 0; i < n; ++i) dyn_idx.push_back(spec.state_index(k) + i);
      for (int i = 0; i < m; ++i) dyn_idx.push_back(spec.input_index(k) + i);
      scatter(Hl, dyn_idx,
              spec.dynamics.weighted_hessian(traj.state(k + 1), traj.state(k), traj.input(k),
                                             v.segment(k * n, n)));
    }
  }
  return Hl;
}

// Inverse of the reduced Hessian with eigenvalues reflected and floored so
// that every step is a descent direction.
Matrix convexified_inverse(const Matrix& W) {
  const Matrix Ws = 0.5 * (W + W.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Ws);
  Vector e = eig.eigenvalues();
  const double floor = 1e-8 * std::max(1.0, e.cwiseAbs().maxCoeff());
  for (Index i = 0; i < e.size(); ++i) e[i] = 1.0 / std::max(std::abs(e[i]), floor);
  return eig.eigenvectors() * e.asDiagonal() * eig.eigenvectors().transpose();
}

double merit(const ReducedModel& M, const Vector& weights) {
  return M.objective + weights.dot(M.G.cwiseMax(0.0));
}

enum class Mode { constrained, penalized };

OcpSolution solve_impl(const OcpSpec& spec, const Vector& theta, const Vector& rho, Mode mode,
                       const std::optional<Trajectory>& init, const SolverOptions& options) {
  spec.validate();
  if (theta.size() != spec.q) throw DimensionError("theta does not have q entries");
  if (!theta.allFinite()) throw std::invalid_argument("theta must be finite");
  const int pN = spec.p * spec.N;
  const int mN = spec.m * spec.N;
  if (mode == Mode::penalized) {
    if (rho.size() != pN) throw DimensionError("rho does not have p*N entries");
    if ((rho.array() < 0.0).any()) throw std::invalid_argument("rho must be nonnegative");
  }
  if (mode == Mode::constrained) {
    // Rows without input coefficients are fixed by x0 at stage 0.
    for (int j = 0; j < spec.p; ++j) {
      const bool state_only = spec.H.row(j).tail(spec.m).isZero(0.0);
      const double g0 = spec.H.row(j).head(spec.n).dot(spec.x0) - spec.h[j];
      if (state_only && g0 > 1e-12) {
        throw SolverError("infeasible: constraint row " + std::to_string(j) +
                          " is violated by the fixed initial state (g = " + std::to_string(g0) +
                          ")");
      }
    }
  }
  Vector U = Vector::Zero(mN);
  if (init) {
    check_dimensions(spec, *init);
    U = init->U();
  }

  ReducedModel M;
  try {
    M = evaluate(spec, theta, U, options.step);
  } catch (const StepError& e) {
    throw SolverError(std::string("initial rollout failed: ") + e.what());
  }

  const Vector upper = mode == Mode::penalized ? rho : Vector::Constant(pN, kInf);
  Vector lambda = Vector::Zero(pN);
  double mu = 1.0;
  bool converged = false;
  double stat = kInf;
  int iter = 0;
  const int total = options.warmup_iterations + options.max_iterations;

  for (; iter < total; ++iter) {
    const bool warmup = iter < options.warmup_iterations;
    const Vector v = adjoint(spec, theta, M, warmup ? Vector::Zero(pN) : lambda);
    const Matrix W = M.S.transpose() * lagrangian_hessian(spec, theta, M.traj, v) * M.S;
    const Matrix Winv = convexified_inverse(W);

    Vector lambda_new = Vector::Zero(pN);
    if (!warmup && pN > 0) {
      const Matrix WinvCt = Winv * M.C.transpose();
      const Matrix Q = M.C * WinvCt;
      const Vector c = WinvCt.transpose() * M.grad - M.G;
      const BoxQpResult qp = solve_box_qp(0.5 * (Q + Q.transpose()), c, upper);
      if (!qp.bounded) {
        throw SolverError("linearized constraints are infeasible", M.traj, stat);
      }
      lambda_new = qp.x;
    }
    const Vector reduced_grad = M.grad + M.C.transpose() * lambda_new;
    const Vector d = -Winv * reduced_grad;
    stat = reduced_grad.lpNorm<Eigen::Infinity>();

    if (warmup) {
      if (stat <= options.stationarity_tol) continue;
    } else {
      const double infeas = mode == Mode::constrained && pN > 0 ? M.G.maxCoeff() : 0.0;
      if (stat <= options.stationarity_tol &&
          d.lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + U.lpNorm<Eigen::Infinity>()) &&
          infeas <= 1e-10) {
        lambda = lambda_new;
        converged = true;
        break;
      }
    }

    Vector weights = Vector::Zero(pN);
    if (!warmup) {
      if (mode == Mode::penalized) {
        weights = rho;
      } else {
        const double lmax = lambda_new.size() ? lambda_new.maxCoeff() : 0.0;
        if (mu < 1.1 * lmax) mu = 1.5 * lmax + 1.0;
        weights.setConstant(mu);
      }
    }
    const double m0 = merit(M, weights);
    const Vector Gd = M.G + M.C * d;
    const double slope =
        M.grad.dot(d) + weights.dot(Gd.cwiseMax(0.0) - M.G.cwiseMax(0.0));

    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= 1e-12) {
      try {
        ReducedModel trial = evaluate(spec, theta, U + alpha * d, options.step);
        const double m1 = merit(trial, weights);
        const bool negligible = slope > -1e-14 * (1.0 + std::abs(m0));
        if (m1 <= m0 + 1e-4 * alpha * slope || (negligible && alpha == 1.0)) {
          U += alpha * d;
          M = std::move(trial);
          accepted = true;
          break;
        }
      } catch (const StepError&) {
        // shorten the step
      }
      alpha *= 0.5;
    }
    if (!warmup) lambda = lambda_new;
    if (!accepted) break;
  }

  OcpSolution sol;
  sol.traj = M.traj;
  sol.iterations = iter;
  sol.v = adjoint(spec, theta, M, lambda);
  if (mode == Mode::constrained) {
    sol.lambda = lambda;
    sol.objective = M.objective;
  } else {
    sol.penalty_duals = lambda;
    sol.objective = merit(M, rho);
  }
  sol.kkt_residual = kkt_residual(spec, theta, sol);

  if (!converged && sol.kkt_residual > options.accept_tol) {
    throw SolverError("forward solve did not converge after " + std::to_string(iter) +
                          " iterations (stationarity " + std::to_string(sol.kkt_residual) + ")",
                      sol.traj, sol.kkt_residual);
  }
  if (sol.kkt_residual > options.accept_tol) {
    throw SolverError("stationarity residual " + std::to_string(sol.kkt_residual) +
                          " above tolerance",
                      sol.traj, sol.kkt_residual);
  }
  if (mode == Mode::constrained && pN > 0) {
    const Vector G = eval_constraints(spec, sol.traj);
    if (G.maxCoeff() > 1e-8) {
      throw SolverError("primal infeasible: max g = " + std::to_string(G.maxCoeff()), sol.traj,
                        sol.kkt_residual);
    }
  }
  return sol;
}

}  // namespace

Vector stationarity(const OcpSpec& spec, const Vector& theta, const Trajectory& traj,
                    const Vector& v, const Vector& lambda) {
  check_dimensions(spec, traj);
  Vector s = eval_features_sum_jacobian(spec, traj) * theta;
  if (v.size() > 0) s += eval_dynamics_jacobian(spec, traj) * v;
  if (lambda.size() > 0) s += eval_constraints_jacobian(spec, traj) * lambda;
  return s.tail(spec.num_vars() - spec.n);
}

double kkt_residual(const OcpSpec& spec, const Vector& theta, const OcpSolution& sol) {
  const Vector& duals = sol.lambda.size() > 0 ? sol.lambda : sol.penalty_duals;
  return stationarity(spec, theta, sol.traj, sol.v, duals).lpNorm<Eigen::Infinity>();
}

OcpSolution solve_ocp(const OcpSpec& spec, const Vector& theta,
                      const std::optional<Trajectory>& init, const SolverOptions& options) {
  return solve_impl(spec, theta, Vector(), Mode::constrained, init, options);
}

OcpSolution solve_penalized_ocp(const OcpSpec& spec, const Vector& theta, const Vector& rho,
                                const std::optional<Trajectory>& init,
                                const SolverOptions& options) {
  return solve_impl(spec, theta, rho, Mode::penalized, init, options);
}

}  // namespace ioc
