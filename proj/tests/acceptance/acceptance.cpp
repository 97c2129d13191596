// One PASS/FAIL line per acceptance criterion. Optional arguments select
// criteria by number; the exit status is nonzero if any selected one fails.

#include "ioc/bench.hpp"
#include "ioc/cls_solver.hpp"
#include "ioc/estimators.hpp"
#include "ioc/ocp_solver.hpp"
#include "ioc/systems.hpp"
#include "../support/cls_oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace {

using namespace ioc;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string num(double v, int precision = 4) {
  std::ostringstream ss;
  ss << std::setprecision(precision) << v;
  return ss.str();
}

double inf_norm(const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

Outcome noiseless_exactness() {
  Outcome o{true, ""};
  double worst = 0.0;
  for (const char* name : {"msd", "bicycle"}) {
    const OcpSpec spec = make_system(name);
    const OcpSolution opt = solve_ocp(spec, *spec.theta_true);
    const DemoSet ds = generate_demoset(spec, opt, *spec.theta_true,
                                        make_noise_spec(spec, opt.traj.U(), 0.0, 1), 10);
    EstimatorOptions eo;
    eo.cutoff = 0.0;
    for (Method m : {Method::KKT, Method::TR, Method::EP}) {
      const double e = rmse(estimate(m, spec, ds, eo).theta, *spec.theta_true);
      worst = std::max(worst, e);
      o.passed = o.passed && e <= 1e-4;
    }
  }
  o.detail = "max RMSE " + num(worst) + " (tol 1e-4)";
  return o;
}

Outcome theorem_equivalence() {
  double theta_gap = 0.0, dual_gap = 0.0;
  for (const std::string& name : system_names()) {
    const OcpSpec spec = make_system(name);
    const OcpSolution opt = solve_ocp(spec, *spec.theta_true);
    const EstimationResult kkt = estimate_exact_kkt(spec, opt.traj);
    const EstimationResult ep = estimate_exact_ep(spec, opt.traj);
    theta_gap = std::max(theta_gap, inf_norm(kkt.theta - ep.theta));
    for (std::size_t i = 0; i < kkt.mask.size(); ++i) {
      const auto j = static_cast<Eigen::Index>(i);
      if (kkt.mask[i] || ep.mask[i]) dual_gap = std::max(dual_gap, std::abs(kkt.duals[j] - ep.duals[j]));
    }
  }
  return {theta_gap <= 1e-8 && dual_gap <= 1e-8,
          "theta gap " + num(theta_gap) + ", dual gap " + num(dual_gap) + " (tol 1e-8)"};
}

Outcome lemma_exactness() {
  double worst = 0.0;
  for (const std::string& name : system_names()) {
    const OcpSpec spec = make_system(name);
    const OcpSolution c = solve_ocp(spec, *spec.theta_true);
    const Vector rho = Vector::Constant(spec.p * spec.N, inf_norm(c.lambda) + 1.0);
    const OcpSolution p = solve_penalized_ocp(spec, *spec.theta_true, rho);
    worst = std::max({worst, inf_norm(c.traj.X() - p.traj.X()), inf_norm(c.traj.U() - p.traj.U())});
  }
  return {worst <= 1e-6, "max trajectory distance " + num(worst) + " (tol 1e-6)"};
}

ExperimentConfig table_config(std::vector<std::string> systems, std::vector<double> pcts) {
  ExperimentConfig cfg;
  cfg.systems = std::move(systems);
  cfg.pcts = std::move(pcts);
  return cfg;
}

const ResultTable& table_one() {
  static const ResultTable t = run_benchmark(table_config({"pendulum", "bicycle"}, {0.05, 0.10}));
  return t;
}

Outcome ordering() {
  const ResultTable& t = table_one();
  Outcome o{true, ""};
  for (double pct : {0.05, 0.10}) {
    const double ep3 = t.at("bicycle", "EP", pct).mean_rmse;
    const double tr3 = t.at("bicycle", "TR", pct).mean_rmse;
    const double kkt3 = t.at("bicycle", "KKT", pct).mean_rmse;
    const double ep2 = t.at("pendulum", "EP", pct).mean_rmse;
    const double kkt2 = t.at("pendulum", "KKT", pct).mean_rmse;
    const bool order3 = ep3 < tr3 && tr3 < kkt3;
    const bool ratio2 = ep2 < 0.5 * kkt2;
    const bool band2 = std::abs(kkt2 - 8.60) <= 0.25 * 8.60;
    o.passed = o.passed && order3 && ratio2 && band2;
    o.detail += (o.detail.empty() ? "" : "; ") + num(100 * pct, 3) + "%: sys3 EP/TR/KKT " + num(ep3) +
                "/" + num(tr3) + "/" + num(kkt3) + (order3 ? " ordered" : " NOT ordered") +
                ", sys2 EP/KKT " + num(ep2) + "/" + num(kkt2) + (ratio2 ? "" : " ratio>0.5") +
                (band2 ? "" : " KKT outside 8.60+-25%");
  }
  return o;
}

Outcome magnitude_bands() {
  const ResultTable& t = table_one();
  const double ep5 = t.at("bicycle", "EP", 0.05).mean_rmse;
  const double ep10 = t.at("bicycle", "EP", 0.10).mean_rmse;
  const double kkt5 = t.at("bicycle", "KKT", 0.05).mean_rmse;
  const double kkt10 = t.at("bicycle", "KKT", 0.10).mean_rmse;
  return {ep5 <= 1.5 && ep10 <= 3.0 && kkt5 >= 50.0 && kkt10 >= 50.0,
          "sys3 EP " + num(ep5) + " (<=1.5), " + num(ep10) + " (<=3.0); KKT " + num(kkt5) + ", " +
              num(kkt10) + " (>=50)"};
}

Outcome robustness() {
  ExperimentConfig cfg = table_config({"bicycle"}, {0.0001, 0.05, 0.10});
  cfg.robustness = RobustnessBlock{"car_length", 0.05};
  const ResultTable t = run_robustness(cfg);
  Outcome o{true, ""};
  for (double pct : cfg.pcts) {
    const double ep = t.at("bicycle", "EP", pct).mean_rmse;
    const double tr = t.at("bicycle", "TR", pct).mean_rmse;
    const double kkt = t.at("bicycle", "KKT", pct).mean_rmse;
    bool ok = ep <= 3.0;
    if (pct >= 0.05) ok = ok && ep < tr && ep < kkt;
    o.passed = o.passed && ok;
    o.detail += (o.detail.empty() ? "" : "; ") + num(100 * pct, 3) + "%: EP/TR/KKT " + num(ep) + "/" +
                num(tr) + "/" + num(kkt) + (ok ? "" : " FAIL");
  }
  return o;
}

Outcome psi_oracle() {
  std::mt19937_64 rng(2718);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(10'000'000);
  for (double& v : z) v = normal(rng);
  double worst_mc = 0.0, worst_fd = 0.0;
  for (double sigma : {0.1, 0.25, 0.5, 0.75, 1.0}) {
    for (int i = 0; i < 9; ++i) {
      const double mu = -2.0 + 0.5 * i;
      double acc = 0.0;
      for (double v : z) acc += std::max(0.0, mu + sigma * v);
      worst_mc = std::max(worst_mc, std::abs(acc / static_cast<double>(z.size()) - psi(mu, sigma)));
      const double h = 1e-5;
      const double fd = (psi(mu + h, sigma) - psi(mu - h, sigma)) / (2.0 * h);
      worst_fd = std::max(worst_fd, std::abs(fd - psi_dmu(mu, sigma)));
    }
  }
  return {worst_mc <= 1e-3 && worst_fd <= 1e-8,
          "MC gap " + num(worst_mc) + " (tol 1e-3), derivative gap " + num(worst_fd) + " (tol 1e-8)"};
}

Outcome jacobian_suite() {
  VerifyOptions vo;
  vo.fd_trajectories = 20;
  vo.psi_draws = 2;
  const VerifyReport r = run_verify(vo);
  int checks = 0, failed = 0;
  double worst = 0.0;
  std::string first_failure;
  for (const VerifyCheck& c : r.checks) {
    if (c.name.find("finite differences") == std::string::npos || c.name.find("psi") != std::string::npos) continue;
    ++checks;
    worst = std::max(worst, c.value);
    if (!c.passed) {
      ++failed;
      if (first_failure.empty()) first_failure = ", first failure: " + c.name;
    }
  }
  return {checks > 0 && failed == 0, std::to_string(checks - failed) + "/" + std::to_string(checks) +
                                         " Jacobians pass, worst relative deviation " + num(worst) +
                                         " (tol 1e-5)" + first_failure};
}

Outcome cls_oracle() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ClsProblem p;
    p.A.resize(20, 8);
    for (Eigen::Index i = 0; i < p.A.size(); ++i) p.A.data()[i] = normal(rng);
    for (int j = 1; j < 8; ++j) {
      if (coin(rng)) p.nonneg.push_back(j);
    }
    worst = std::max(worst, std::abs(solve_cls(p).residual_norm - testing::cls_enumeration_objective(p)));
  }
  return {worst <= 1e-8, "max objective gap " + num(worst) + " over 100 problems (tol 1e-8)"};
}

Outcome determinism() {
  const ExperimentConfig cfg;
  const std::string first = results_to_string(run_benchmark(cfg), ResultFormat::tsv);
  const char* previous = std::getenv("IOC_WORKERS");
  const std::string saved = previous ? previous : "";
  setenv("IOC_WORKERS", "4", 1);
  const std::string second = results_to_string(run_benchmark(cfg), ResultFormat::tsv);
  if (previous) {
    setenv("IOC_WORKERS", saved.c_str(), 1);
  } else {
    unsetenv("IOC_WORKERS");
  }
  return {first == second, std::to_string(first.size()) + " bytes, " +
                               (first == second ? "identical" : "different") + " across runs"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "noiseless exactness", 10.0, noiseless_exactness},
      {2, "inverse KKT / exact penalty equivalence", 5.0, theorem_equivalence},
      {3, "exact penalty forward solve", 30.0, lemma_exactness},
      {4, "estimator ordering", 300.0, ordering},
      {5, "magnitude bands", 300.0, magnitude_bands},
      {6, "model-mismatch robustness", 300.0, robustness},
      {7, "psi oracle", 0.0, psi_oracle},
      {8, "Jacobian suite", 0.0, jacobian_suite},
      {9, "CLS oracle", 0.0, cls_oracle},
      {10, "determinism", 0.0, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool ok = o.passed;
    std::string timing = num(secs, 3) + " s";
    if (c.budget_s > 0.0) {
      timing += " (limit " + num(c.budget_s, 3) + " s)";
      ok = ok && secs < c.budget_s;
    }
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << c.id << " " << c.name << ": " << o.detail
              << "  [" << timing << "]" << std::endl;
    failures += ok ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
