#include "ioc/estimators.hpp"

#include "ioc/cls_solver.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ioc {

namespace {

using Index = Eigen::Index;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }
double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double row_tol(const OcpSpec& spec, int j, double activation_tol) {
  return activation_tol * (1.0 + std::abs(spec.h[j]));
}

// Rows of x_0 carry the multiplier of the fixed initial state and are dropped.
Matrix free_rows(const OcpSpec& spec, const Matrix& J) {
  return J.bottomRows(J.rows() - spec.n);
}

void require_features(const Matrix& J_theta) {
  if (J_theta.size() == 0 || J_theta.isZero(0.0)) {
    throw std::invalid_argument("feature Jacobian is empty at the demonstration");
  }
}

Anchor resolve_anchor(const OcpSpec& spec, const DemoSet* ds, const EstimatorOptions& options) {
  if (options.anchor) return *options.anchor;
  if (ds && ds->truth && ds->truth->theta.size() > 0) return {0, ds->truth->theta[0]};
  if (spec.theta_true && spec.theta_true->size() > 0) return {0, (*spec.theta_true)[0]};
  return {};
}

void check_demos(const OcpSpec& spec, const DemoSet& ds) {
  if (ds.size() < 1) throw std::invalid_argument("demo set is empty");
  for (const Trajectory& demo : ds.demos) check_dimensions(spec, demo);
}

Regression single_regression(const OcpSpec& spec, const Trajectory& traj, Matrix J_dual,
                             std::vector<bool> keep) {
  Regression reg;
  reg.J_theta = free_rows(spec, eval_features_sum_jacobian(spec, traj));
  require_features(reg.J_theta);
  reg.J_v = free_rows(spec, eval_dynamics_jacobian(spec, traj));
  reg.J_dual = free_rows(spec, J_dual);
  reg.keep = std::move(keep);
  return reg;
}

// One regression per demo, theta shared, v_d and lambda_d block diagonal.
// Multiplier lambda_{k,d}[j] is kept when keep_row(g, tol) holds.
template <class KeepRow>
EstimationResult per_demo_fit(const OcpSpec& spec, const DemoSet& ds,
                              const EstimatorOptions& options, Method method, KeepRow keep_row) {
  check_demos(spec, ds);
  const int D = ds.size();
  const Index rows = spec.num_vars() - spec.n;
  const Index nv = static_cast<Index>(spec.n) * spec.N;
  const Index np = static_cast<Index>(spec.p) * spec.N;

  Regression reg;
  reg.J_theta = Matrix::Zero(rows * D, spec.q);
  reg.J_v = Matrix::Zero(rows * D, nv * D);
  reg.J_dual = Matrix::Zero(rows * D, np * D);
  reg.keep.assign(static_cast<std::size_t>(np * D), false);
  for (int d = 0; d < D; ++d) {
    const Trajectory& demo = ds.demos[static_cast<std::size_t>(d)];
    reg.J_theta.middleRows(rows * d, rows) = free_rows(spec, eval_features_sum_jacobian(spec, demo));
    reg.J_v.block(rows * d, nv * d, rows, nv) = free_rows(spec, eval_dynamics_jacobian(spec, demo));
    reg.J_dual.block(rows * d, np * d, rows, np) =
        free_rows(spec, eval_constraints_jacobian(spec, demo));
    const Vector g = eval_constraints(spec, demo);
    for (int k = 0; k < spec.N; ++k) {
      for (int j = 0; j < spec.p; ++j) {
        const Index i = static_cast<Index>(k) * spec.p + j;
        reg.keep[static_cast<std::size_t>(np * d + i)] =
            keep_row(g[i], row_tol(spec, j, options.activation_tol));
      }
    }
  }
  require_features(reg.J_theta);

  EstimationResult out = solve_regression(reg, resolve_anchor(spec, &ds, options), method);
  out.diagnostics.D = D;
  if (ds.noise) out.diagnostics.noise_pct = ds.noise->pct;
  return out;
}

Matrix stage_covariance(const DemoSet& ds, const Trajectory& mean, int k) {
  const Vector tbar = mean.stage(k);
  Matrix S = Matrix::Zero(tbar.size(), tbar.size());
  if (ds.size() < 2) return S;
  for (const Trajectory& demo : ds.demos) {
    const Vector e = demo.stage(k) - tbar;
    S.noalias() += e * e.transpose();
  }
  return S / static_cast<double>(ds.size() - 1);
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::EXACT_KKT: return "EXACT_KKT";
    case Method::EXACT_EP: return "EXACT_EP";
    case Method::KKT: return "KKT";
    case Method::TR: return "TR";
    case Method::EP: return "EP";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  std::string upper = name;
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (Method m : {Method::EXACT_KKT, Method::EXACT_EP, Method::KKT, Method::TR, Method::EP}) {
    if (to_string(m) == upper) return m;
  }
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

EstimationResult solve_regression(const Regression& reg, const Anchor& anchor, Method method) {
  const Index rows = reg.J_theta.rows();
  const Index q = reg.J_theta.cols();
  const Index nv = reg.J_v.cols();
  const Index nd = reg.J_dual.cols();
  if (reg.J_v.rows() != rows || reg.J_dual.rows() != rows ||
      static_cast<Index>(reg.keep.size()) != nd) {
    throw DimensionError("regression blocks have inconsistent shapes");
  }
  if (anchor.index < 0 || anchor.index >= q) {
    throw std::out_of_range("anchor index " + std::to_string(anchor.index) + " out of range");
  }

  std::vector<int> kept;
  for (Index j = 0; j < nd; ++j) {
    if (reg.keep[static_cast<std::size_t>(j)]) kept.push_back(static_cast<int>(j));
  }
  const Index nk = static_cast<Index>(kept.size());

  ClsProblem prob;
  prob.A.resize(rows, q + nv + nk);
  prob.A << reg.J_theta, reg.J_v, Matrix::Zero(rows, nk);
  for (Index c = 0; c < nk; ++c) {
    prob.A.col(q + nv + c) = reg.J_dual.col(kept[static_cast<std::size_t>(c)]);
    prob.nonneg.push_back(static_cast<int>(q + nv + c));
  }
  prob.anchor_index = anchor.index;
  prob.anchor_value = anchor.value;
  const ClsSolution sol = solve_cls(prob);

  EstimationResult out;
  out.method = method;
  out.theta = sol.beta.head(q);
  out.v = sol.beta.segment(q, nv);
  out.duals = Vector::Zero(nd);
  for (Index c = 0; c < nk; ++c) out.duals[kept[static_cast<std::size_t>(c)]] = sol.beta[q + nv + c];
  out.mask = reg.keep;
  out.residual_norm = sol.residual_norm;
  out.diagnostics.anchor = anchor;
  out.diagnostics.rank_deficient = sol.rank_deficient;
  out.diagnostics.kkt_violation = sol.kkt_violation;
  return out;
}

Regression exact_ep_regression(const OcpSpec& spec, const Trajectory& traj,
                               double activation_tol) {
  check_dimensions(spec, traj);
  // Right-hand derivative of max(0, g), with rows inside the activation
  // tolerance counted as active.
  Matrix J = eval_constraints_jacobian(spec, traj);
  const Vector g = eval_constraints(spec, traj);
  std::vector<bool> keep(static_cast<std::size_t>(g.size()), false);
  for (Index i = 0; i < g.size(); ++i) {
    const int j = static_cast<int>(i % spec.p);
    if (g[i] >= -row_tol(spec, j, activation_tol)) {
      keep[static_cast<std::size_t>(i)] = true;
    } else {
      J.col(i).setZero();
    }
  }
  return single_regression(spec, traj, std::move(J), std::move(keep));
}

EstimationResult estimate_exact_kkt(const OcpSpec& spec, const Trajectory& traj_opt,
                                    const EstimatorOptions& options) {
  check_dimensions(spec, traj_opt);
  const Vector g = eval_constraints(spec, traj_opt);
  std::vector<bool> keep(static_cast<std::size_t>(g.size()), false);
  for (Index i = 0; i < g.size(); ++i) {
    const int j = static_cast<int>(i % spec.p);
    keep[static_cast<std::size_t>(i)] = std::abs(g[i]) <= row_tol(spec, j, options.activation_tol);
  }
  const Regression reg =
      single_regression(spec, traj_opt, eval_constraints_jacobian(spec, traj_opt), std::move(keep));
  EstimationResult out = solve_regression(reg, resolve_anchor(spec, nullptr, options),
                                          Method::EXACT_KKT);
  out.diagnostics.D = 1;
  return out;
}

EstimationResult estimate_exact_ep(const OcpSpec& spec, const Trajectory& traj_opt,
                                   const EstimatorOptions& options) {
  const Regression reg = exact_ep_regression(spec, traj_opt, options.activation_tol);
  EstimationResult out =
      solve_regression(reg, resolve_anchor(spec, nullptr, options), Method::EXACT_EP);
  out.diagnostics.D = 1;
  out.diagnostics.shared_v = true;
  return out;
}

EstimationResult estimate_kkt(const OcpSpec& spec, const DemoSet& ds,
                              const EstimatorOptions& options) {
  return per_demo_fit(spec, ds, options, Method::KKT,
                      [](double g, double tol) { return std::abs(g) <= tol; });
}

EstimationResult estimate_tr(const OcpSpec& spec, const DemoSet& ds,
                             const EstimatorOptions& options) {
  return per_demo_fit(spec, ds, options, Method::TR,
                      [](double g, double tol) { return g >= -tol; });
}

MeanJacobians build_mean_jacobians(const OcpSpec& spec, const DemoSet& ds,
                                   const EstimatorOptions& options) {
  check_demos(spec, ds);
  const int n = spec.n;
  const int m = spec.m;
  const int p = spec.p;
  const double inv_D = 1.0 / ds.size();

  MeanJacobians out;
  out.Jbar_theta = Matrix::Zero(spec.num_vars(), spec.q);
  out.Jbar_v = Matrix::Zero(spec.num_vars(), n * spec.N);
  for (const Trajectory& demo : ds.demos) {
    out.Jbar_theta += eval_features_sum_jacobian(spec, demo);
    out.Jbar_v += eval_dynamics_jacobian(spec, demo);
  }
  out.Jbar_theta *= inv_D;
  out.Jbar_v *= inv_D;

  const Trajectory mean = mean_trajectory(ds);
  const bool configured = ds.noise && !options.empirical_sigma;
  if (configured) ds.noise->validate(n, m);
  out.sigma_source = configured ? "config" : "empirical";

  out.Jbar_rho = Matrix::Zero(spec.num_vars(), p * spec.N);
  out.rho_mask.assign(static_cast<std::size_t>(p * spec.N), false);
  out.mu.resize(p * spec.N);
  out.sigma.resize(p * spec.N);
  for (int k = 0; k < spec.N; ++k) {
    const Matrix S = configured ? ds.noise->sigma_t : stage_covariance(ds, mean, k);
    const Vector tbar = mean.stage(k);
    for (int j = 0; j < p; ++j) {
      const Index i = static_cast<Index>(k) * p + j;
      const Eigen::RowVectorXd Hj = spec.H.row(j);
      const double mu = Hj.dot(tbar) - spec.h[j];
      const double sigma = std::sqrt(std::max(0.0, (Hj * S * Hj.transpose())(0, 0)));
      double value = 0.0;
      double slope = 0.0;
      if (sigma > 0.0) {
        value = psi(mu, sigma);
        slope = psi_dmu(mu, sigma);
      } else {
        value = std::max(0.0, mu);
        slope = mu >= -row_tol(spec, j, options.activation_tol) ? 1.0 : 0.0;
      }
      out.mu[i] = mu;
      out.sigma[i] = sigma;
      const bool keep =
          value > options.cutoff || (options.cutoff <= 0.0 && slope > 0.0);
      if (!keep) continue;
      out.rho_mask[static_cast<std::size_t>(i)] = true;
      out.Jbar_rho.col(i).segment(spec.state_index(k), n) = slope * Hj.head(n).transpose();
      out.Jbar_rho.col(i).segment(spec.input_index(k), m) = slope * Hj.tail(m).transpose();
    }
  }
  return out;
}

EstimationResult estimate_ep(const OcpSpec& spec, const DemoSet& ds,
                             const EstimatorOptions& options) {
  const MeanJacobians J = build_mean_jacobians(spec, ds, options);
  Regression reg;
  reg.J_theta = free_rows(spec, J.Jbar_theta);
  require_features(reg.J_theta);
  reg.J_v = free_rows(spec, J.Jbar_v);
  reg.J_dual = free_rows(spec, J.Jbar_rho);
  reg.keep = J.rho_mask;

  EstimationResult out = solve_regression(reg, resolve_anchor(spec, &ds, options), Method::EP);
  out.diagnostics.D = ds.size();
  out.diagnostics.shared_v = true;
  out.diagnostics.sigma_source = J.sigma_source;
  if (ds.noise) out.diagnostics.noise_pct = ds.noise->pct;
  if (std::none_of(J.rho_mask.begin(), J.rho_mask.end(), [](bool b) { return b; })) {
    out.diagnostics.warnings.push_back(
        "all penalty columns fell below the cutoff; fitted without constraint terms");
  }
  return out;
}

EstimationResult estimate(Method method, const OcpSpec& spec, const DemoSet& ds,
                          const EstimatorOptions& options) {
  switch (method) {
    case Method::KKT: return estimate_kkt(spec, ds, options);
    case Method::TR: return estimate_tr(spec, ds, options);
    case Method::EP: return estimate_ep(spec, ds, options);
    case Method::EXACT_KKT:
    case Method::EXACT_EP: {
      check_demos(spec, ds);
      EstimatorOptions opts = options;
      opts.anchor = resolve_anchor(spec, &ds, options);
      const Trajectory mean = mean_trajectory(ds);
      EstimationResult out = method == Method::EXACT_KKT ? estimate_exact_kkt(spec, mean, opts)
                                                         : estimate_exact_ep(spec, mean, opts);
      out.diagnostics.D = ds.size();
      if (ds.noise) out.diagnostics.noise_pct = ds.noise->pct;
      return out;
    }
  }
  throw std::invalid_argument("unknown estimator");
}

double psi(double mu, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("psi: sigma must be nonnegative");
  if (sigma == 0.0) return std::max(0.0, mu);
  // psi(mu) = mu + psi(-mu) keeps the evaluation on the non-cancelling side.
  const double a = -std::abs(mu);
  const double z = a / sigma;
  const double tail = std::max(0.0, sigma * normal_pdf(z) + a * normal_cdf(z));
  return mu > 0.0 ? mu + tail : tail;
}

double psi_dmu(double mu, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("psi_dmu: sigma must be positive; use a subgradient of max(0, mu)");
  }
  return normal_cdf(mu / sigma);
}

double rmse(const Vector& theta_hat, const Vector& theta_star) {
  if (theta_hat.size() != theta_star.size()) {
    throw DimensionError("rmse: lengths " + std::to_string(theta_hat.size()) + " and " +
                         std::to_string(theta_star.size()) + " differ");
  }
  if (theta_hat.size() == 0) throw DimensionError("rmse: empty vectors");
  return std::sqrt((theta_hat - theta_star).squaredNorm() / static_cast<double>(theta_hat.size()));
}

}  // namespace ioc
