#pragma once

#include "ioc/core_model.hpp"
#include "ioc/demos.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ioc {

enum class Method { EXACT_KKT, EXACT_EP, KKT, TR, EP };

std::string to_string(Method method);
/// Accepts "exact_kkt", "exact_ep", "kkt", "tr", "ep" in any case.
Method method_from_string(const std::string& name);

/// Fixes theta[index] = value to remove the scale ambiguity of the regression.
struct Anchor {
  int index = 0;
  double value = 1.0;
};

struct EstimatorOptions {
  /// Defaults to theta_true[0] of the demo set truth or of the spec, else 1.
  std::optional<Anchor> anchor;
  /// A constraint row j counts as active when |g| <= activation_tol * (1 + |h[j]|).
  double activation_tol = 1e-6;
  /// Smoothed penalty columns with psi <= cutoff are dropped.
  double cutoff = 0.005;
  /// Estimate the stage covariance from the demos even if the demo set carries one.
  bool empirical_sigma = false;
};

struct Diagnostics {
  Anchor anchor;
  int D = 0;
  double noise_pct = 0.0;
  /// "config", "empirical" or "none".
  std::string sigma_source = "none";
  bool shared_v = false;
  bool rank_deficient = false;
  double kkt_violation = 0.0;
  std::vector<std::string> warnings;
};

struct EstimationResult {
  Vector theta;
  Method method = Method::EXACT_KKT;
  /// Dynamics multipliers: one nN block per demo, or a single shared block.
  Vector v;
  /// lambda (KKT-type methods) or rho (penalty methods); dropped coordinates are 0.
  Vector duals;
  /// Same length as duals: true for coordinates kept in the regression.
  std::vector<bool> mask;
  double residual_norm = 0.0;
  Diagnostics diagnostics;
};

/// Homogeneous regression J_theta' theta + J_v' v + J_dual' dual = 0 over the
/// free decision rows, with dual >= 0 on kept columns.
struct Regression {
  Matrix J_theta;
  Matrix J_v;
  Matrix J_dual;
  std::vector<bool> keep;
};

/// Drops unkept dual columns, anchors theta and solves the constrained least squares.
EstimationResult solve_regression(const Regression& reg, const Anchor& anchor, Method method);

/// Regression of the exact penalty estimator at a single trajectory, before solving.
Regression exact_ep_regression(const OcpSpec& spec, const Trajectory& traj,
                               double activation_tol = 1e-6);

EstimationResult estimate_exact_kkt(const OcpSpec& spec, const Trajectory& traj_opt,
                                    const EstimatorOptions& options = {});
EstimationResult estimate_exact_ep(const OcpSpec& spec, const Trajectory& traj_opt,
                                   const EstimatorOptions& options = {});
EstimationResult estimate_kkt(const OcpSpec& spec, const DemoSet& ds,
                              const EstimatorOptions& options = {});
EstimationResult estimate_tr(const OcpSpec& spec, const DemoSet& ds,
                             const EstimatorOptions& options = {});
EstimationResult estimate_ep(const OcpSpec& spec, const DemoSet& ds,
                             const EstimatorOptions& options = {});

/// Runs any method; the exact methods use the mean trajectory of the demo set.
EstimationResult estimate(Method method, const OcpSpec& spec, const DemoSet& ds,
                          const EstimatorOptions& options = {});

/// E[max(0, mu + sigma Z)] for standard normal Z.
double psi(double mu, double sigma);
/// d psi / d mu; requires sigma > 0.
double psi_dmu(double mu, double sigma);

struct MeanJacobians {
  Matrix Jbar_theta;  // b x q
  Matrix Jbar_v;      // b x nN
  Matrix Jbar_rho;    // b x pN, dropped columns zeroed
  std::vector<bool> rho_mask;
  Vector mu;     // per (k, j)
  Vector sigma;  // per (k, j)
  std::string sigma_source;
};

MeanJacobians build_mean_jacobians(const OcpSpec& spec, const DemoSet& ds,
                                   const EstimatorOptions& options = {});

double rmse(const Vector& theta_hat, const Vector& theta_star);

}  // namespace ioc
