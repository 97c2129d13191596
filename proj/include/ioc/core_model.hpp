#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace ioc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when array shapes do not agree with the problem dimensions.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Partial derivatives of a stage residual r(x_next, x, u).
struct DynamicsJacobian {
  Matrix d_next;   // n x n
  Matrix d_state;  // n x n
  Matrix d_input;  // n x m
};

/// Discrete dynamics in residual form r(x_next, x, u) = 0.
///
/// `weighted_hessian` returns sum_i w[i] * d^2 r_i over the stacked
/// argument (x_next, x, u), a (2n+m) x (2n+m) symmetric matrix.
struct Dynamics {
  std::function<Vector(const Vector& x_next, const Vector& x, const Vector& u)> residual;
  std::function<DynamicsJacobian(const Vector& x_next, const Vector& x, const Vector& u)> jacobian;
  std::function<Matrix(const Vector& x_next, const Vector& x, const Vector& u, const Vector& w)>
      weighted_hessian;
};

/// Stage feature map phi(x, u) in R^q.
///
/// `jacobian` is q x (n+m) over t = (x, u); `weighted_hessian` returns
/// sum_i w[i] * d^2 phi_i over t.
struct FeatureMap {
  std::function<Vector(const Vector& x, const Vector& u)> value;
  std::function<Matrix(const Vector& x, const Vector& u)> jacobian;
  std::function<Matrix(const Vector& x, const Vector& u, const Vector& w)> weighted_hessian;
};

/// Forward optimal control problem
///
///   min  sum_{k<N} theta' phi(x_k, u_k)
///   s.t. r(x_{k+1}, x_k, u_k) = 0,  H (x_k, u_k) <= h,  x_0 fixed.
///
/// There is no terminal cost; x_N only enters through the last residual.
struct OcpSpec {
  std::string name;
  int n = 0;
  int m = 0;
  int N = 0;
  int q = 0;
  int p = 0;
  double dt = 0.0;
  Vector x0;
  Dynamics dynamics;
  FeatureMap features;
  Matrix H;  // p x (n+m)
  Vector h;  // p
  std::optional<Vector> theta_true;

  /// Number of decision variables n(N+1) + mN.
  [[nodiscard]] int num_vars() const { return n * (N + 1) + m * N; }
  [[nodiscard]] int stage_dim() const { return n + m; }
  [[nodiscard]] int state_index(int k) const { return k * n; }
  [[nodiscard]] int input_index(int k) const { return n * (N + 1) + k * m; }

  /// Throws DimensionError if H, h, x0 or the feature/residual sizes are inconsistent.
  void validate() const;
};

/// Stacked states X (length n(N+1)) and inputs U (length mN).
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(int n, int m, int N);
  Trajectory(int n, int m, int N, Vector X, Vector U);

  /// Rebuilds (x_0..x_{N-1}, U) from the interleaved vector T and appends x_N.
  static Trajectory from_stages(int n, int m, int N, const Vector& T, const Vector& x_final);

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] int m() const { return m_; }
  [[nodiscard]] int N() const { return N_; }
  [[nodiscard]] const Vector& X() const { return X_; }
  [[nodiscard]] const Vector& U() const { return U_; }
  Vector& X() { return X_; }
  Vector& U() { return U_; }

  [[nodiscard]] Vector state(int k) const { return X_.segment(k * n_, n_); }
  [[nodiscard]] Vector input(int k) const { return U_.segment(k * m_, m_); }
  /// t_k = (x_k, u_k) for k < N.
  [[nodiscard]] Vector stage(int k) const;
  /// Interleaved T = (t_0, ..., t_{N-1}).
  [[nodiscard]] Vector T() const;
  /// Decision vector in solver ordering (X, U).
  [[nodiscard]] Vector decision() const;

  void set_state(int k, const Vector& x) { X_.segment(k * n_, n_) = x; }
  void set_input(int k, const Vector& u) { U_.segment(k * m_, m_) = u; }

  [[nodiscard]] bool matches(const OcpSpec& spec) const {
    return n_ == spec.n && m_ == spec.m && N_ == spec.N;
  }

  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.n_ == b.n_ && a.m_ == b.m_ && a.N_ == b.N_ && a.X_ == b.X_ && a.U_ == b.U_;
  }

 private:
  int n_ = 0;
  int m_ = 0;
  int N_ = 0;
  Vector X_;
  Vector U_;
};

/// J_theta' (b x q): gradient of sum_k phi(x_k, u_k) w.r.t. the decision vector.
Matrix eval_features_sum_jacobian(const OcpSpec& spec, const Trajectory& traj);

/// J_v' (b x nN): column block k holds the gradient of residual r_k.
Matrix eval_dynamics_jacobian(const OcpSpec& spec, const Trajectory& traj);

/// J_lambda' (b x pN) of the stacked affine constraints.
Matrix eval_constraints_jacobian(const OcpSpec& spec, const Trajectory& traj);

/// G_max Jacobian with the right-hand derivative of max(0, .): columns of
/// rows with g < 0 are zero.
Matrix eval_gmax_jacobian(const OcpSpec& spec, const Trajectory& traj);

/// Stacked residuals (r_0, ..., r_{N-1}).
Vector eval_dynamics(const OcpSpec& spec, const Trajectory& traj);

/// Entry k*p + j is H[j,:] t_k - h[j].
Vector eval_constraints(const OcpSpec& spec, const Trajectory& traj);

/// Elementwise max(0, g).
Vector eval_gmax(const OcpSpec& spec, const Trajectory& traj);

/// sum_k theta' phi(x_k, u_k).
double eval_objective(const OcpSpec& spec, const Vector& theta, const Trajectory& traj);

/// Throws DimensionError unless traj has the spec's (n, m, N).
void check_dimensions(const OcpSpec& spec, const Trajectory& traj);

/// Raised when the implicit step r(x_next, x, u) = 0 cannot be solved.
class StepError : public std::runtime_error {
 public:
  StepError(int stage, const std::string& what)
      : std::runtime_error("stage " + std::to_string(stage) + ": " + what), stage_(stage) {}
  [[nodiscard]] int stage() const { return stage_; }

 private:
  int stage_;
};

struct StepOptions {
  double tol = 1e-10;
  int max_iterations = 50;
};

struct StepResult {
  Vector x_next;
  int iterations = 0;
};

/// Newton solve of r(x_next, x, u) = 0 started at x_next = x. One polishing
/// step is taken after the update falls below tol.
StepResult step_dynamics(const OcpSpec& spec, const Vector& x, const Vector& u, int stage,
                         const StepOptions& options = {});

/// Forward simulation of U from spec.x0. `max_iterations`, when given,
/// receives the largest Newton iteration count over all stages.
Trajectory rollout(const OcpSpec& spec, const Vector& U, int* max_iterations = nullptr,
                   const StepOptions& options = {});

}  // namespace ioc
