#pragma once

#include "ioc/core_model.hpp"

#include <optional>
#include <stdexcept>
#include <string>

namespace ioc {

/// Primal-dual solution of the forward problem.
///
/// `lambda` holds the inequality duals of the constrained problem and is
/// empty for penalized solves; `penalty_duals` holds the subgradient of
/// rho' G_max selected by the solver (empty for constrained solves).
struct OcpSolution {
  Trajectory traj;
  Vector v;
  Vector lambda;
  Vector penalty_duals;
  double kkt_residual = 0.0;
  double objective = 0.0;
  int iterations = 0;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, Trajectory best = {}, double residual = 0.0)
      : std::runtime_error(what), best_(std::move(best)), residual_(residual) {}
  [[nodiscard]] const Trajectory& best_iterate() const { return best_; }
  [[nodiscard]] double residual() const { return residual_; }

 private:
  Trajectory best_;
  double residual_;
};

struct SolverOptions {
  int max_iterations = 200;
  int warmup_iterations = 5;     // unconstrained Newton steps from the initial rollout
  double stationarity_tol = 1e-10;
  double accept_tol = 1e-8;      // final residual bound; above it the solve fails
  StepOptions step;
};

/// Solves the constrained forward problem. Without `init` the solver starts
/// from the rollout of U = 0.
OcpSolution solve_ocp(const OcpSpec& spec, const Vector& theta,
                      const std::optional<Trajectory>& init = std::nullopt,
                      const SolverOptions& options = {});

/// Solves min sum theta' phi + rho' G_max subject to the dynamics only.
OcpSolution solve_penalized_ocp(const OcpSpec& spec, const Vector& theta, const Vector& rho,
                                const std::optional<Trajectory>& init = std::nullopt,
                                const SolverOptions& options = {});

/// Stationarity vector J_theta' theta + J_v' v + J_lambda' lambda restricted
/// to the free decision variables (x_1..x_N, U). Rows of x_0 are dropped:
/// the initial state is fixed, so its multiplier absorbs them.
Vector stationarity(const OcpSpec& spec, const Vector& theta, const Trajectory& traj,
                    const Vector& v, const Vector& lambda);

/// Infinity norm of `stationarity` at the solution. Uses `sol.lambda`, or
/// `sol.penalty_duals` for a penalized solution.
double kkt_residual(const OcpSpec& spec, const Vector& theta, const OcpSolution& sol);

}  // namespace ioc
