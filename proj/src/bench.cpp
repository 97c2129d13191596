#include "ioc/bench.hpp"

#include "ioc/cls_solver.hpp"
#include "ioc/finite_difference.hpp"
#include "ioc/ocp_solver.hpp"
#include "ioc/systems.hpp"
#include "number_text.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

namespace ioc {

namespace {

using json = nlohmann::json;
using Index = Eigen::Index;

constexpr std::uint64_t kRobustnessStream = 0x9E3779B97F4A7C15ULL;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

struct Outcome {
  double rmse = kNaN;
  std::string error;
};

// Mean and population standard deviation over the successful repetitions,
// reduced in repetition order.
ResultCell aggregate(const std::string& system, const std::string& estimator, double pct,
                     const std::vector<Outcome>& reps) {
  ResultCell cell{system, estimator, pct, kNaN, kNaN, 0, ""};
  double sum = 0.0;
  std::vector<std::string> errors;
  for (std::size_t r = 0; r < reps.size(); ++r) {
    if (reps[r].error.empty()) {
      sum += reps[r].rmse;
      ++cell.reps_ok;
    } else {
      errors.push_back("rep " + std::to_string(r) + ": " + reps[r].error);
    }
  }
  if (cell.reps_ok > 0) {
    cell.mean_rmse = sum / cell.reps_ok;
    double ss = 0.0;
    for (const Outcome& o : reps) {
      if (o.error.empty()) ss += (o.rmse - cell.mean_rmse) * (o.rmse - cell.mean_rmse);
    }
    cell.std_rmse = std::sqrt(ss / cell.reps_ok);
  }
  for (std::size_t i = 0; i < errors.size(); ++i) cell.note += (i ? "; " : "") + errors[i];
  return cell;
}

struct SystemCase {
  OcpSpec spec;
  Vector theta_star;
  OcpSolution optimum;
};

SystemCase prepare(const std::string& name) {
  SystemCase c{make_system(name), {}, {}};
  if (!c.spec.theta_true) throw std::invalid_argument("system '" + name + "' has no true theta");
  c.theta_star = *c.spec.theta_true;
  c.optimum = solve_ocp(c.spec, c.theta_star);
  return c;
}

EstimatorOptions estimator_options(const ExperimentConfig& cfg, const Vector& theta_star,
                                   double pct) {
  if (cfg.anchor_index >= theta_star.size()) {
    throw std::out_of_range("anchor index " + std::to_string(cfg.anchor_index) + " out of range");
  }
  EstimatorOptions opts;
  opts.anchor = Anchor{cfg.anchor_index, cfg.anchor_value.value_or(theta_star[cfg.anchor_index])};
  opts.cutoff = pct <= cfg.noiseless_pct ? 0.0 : cfg.cutoff;
  return opts;
}

double robustness_factor(std::uint64_t seed_r, double half_width) {
  if (half_width == 0.0) return 1.0;
  std::mt19937_64 rng(seed_r ^ kRobustnessStream);
  std::uniform_real_distribution<double> dist(1.0 - half_width, 1.0 + half_width);
  return dist(rng);
}

ResultTable run_cells(const ExperimentConfig& cfg, bool robust) {
  cfg.validate();
  if (robust && !cfg.robustness) throw std::invalid_argument("config has no robustness block");

  std::vector<SystemCase> cases;
  for (const std::string& name : cfg.systems) cases.push_back(prepare(name));

  const std::size_t S = cases.size();
  const std::size_t P = cfg.pcts.size();
  const std::size_t R = static_cast<std::size_t>(cfg.reps);
  const std::size_t E = cfg.estimators.size();
  // outcomes[((s*P + p)*E + e)*R + r]
  std::vector<Outcome> outcomes(S * P * E * R);

  parallel_for(S * P * R, [&](std::size_t task) {
    const std::size_t r = task % R;
    const std::size_t p = (task / R) % P;
    const std::size_t s = task / (R * P);
    const SystemCase& c = cases[s];
    const std::uint64_t seed_r = cfg.seed + r;
    auto slot = [&](std::size_t e) -> Outcome& { return outcomes[((s * P + p) * E + e) * R + r]; };

    DemoSet ds;
    OcpSpec est_spec = c.spec;
    try {
      const NoiseSpec noise = make_noise_spec(c.spec, c.optimum.traj.U(), cfg.pcts[p], seed_r);
      ds = generate_demoset(c.spec, c.optimum, c.theta_star, noise, cfg.D);
      if (robust) {
        const std::string& param = cfg.robustness->param;
        const double factor = robustness_factor(seed_r, cfg.robustness->half_width);
        est_spec = make_system(cfg.systems[s],
                               {{param, system_param(cfg.systems[s], param) * factor}});
      }
    } catch (const std::exception& ex) {
      for (std::size_t e = 0; e < E; ++e) slot(e).error = std::string("generation: ") + ex.what();
      return;
    }
    for (std::size_t e = 0; e < E; ++e) {
      try {
        const EstimatorOptions opts = estimator_options(cfg, c.theta_star, cfg.pcts[p]);
        const EstimationResult res = estimate(cfg.estimators[e], est_spec, ds, opts);
        slot(e).rmse = rmse(res.theta, c.theta_star);
      } catch (const std::exception& ex) {
        slot(e).error = ex.what();
      }
    }
  });

  ResultTable table;
  table.kind = robust ? "robustness" : "benchmark";
  table.config_hash = config_hash(cfg);
  table.anchor_policy = cfg.anchor_policy();
  for (std::size_t r = 0; r < R; ++r) table.seeds.push_back(cfg.seed + r);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t p = 0; p < P; ++p) {
        const auto first = outcomes.begin() + static_cast<std::ptrdiff_t>(((s * P + p) * E + e) * R);
        table.cells.push_back(aggregate(cfg.systems[s], to_string(cfg.estimators[e]), cfg.pcts[p],
                                        std::vector<Outcome>(first, first + static_cast<std::ptrdiff_t>(R))));
      }
    }
  }
  return table;
}

// ---- verification -------------------------------------------------------

void add(VerifyReport& report, std::string name, double value, double tol, std::string detail = "",
         bool below = true) {
  const bool ok = std::isfinite(value) && (below ? value <= tol : value > tol);
  report.checks.push_back({std::move(name), ok, value, tol, std::move(detail)});
}

double traj_distance(const Trajectory& a, const Trajectory& b) {
  return std::max((a.X() - b.X()).lpNorm<Eigen::Infinity>(), (a.U() - b.U()).lpNorm<Eigen::Infinity>());
}

Trajectory from_decision(const OcpSpec& spec, const Vector& z) {
  const int nx = spec.n * (spec.N + 1);
  return Trajectory(spec.n, spec.m, spec.N, z.head(nx), z.tail(spec.m * spec.N));
}

void verify_system(VerifyReport& report, const std::string& name, std::uint64_t stream,
                   const VerifyOptions& options) {
  const SystemCase c = prepare(name);
  const OcpSpec& spec = c.spec;
  const double lam_max = c.optimum.lambda.size() ? c.optimum.lambda.lpNorm<Eigen::Infinity>() : 0.0;

  // Exact penalty reproduces the constrained optimum.
  const Vector rho = Vector::Constant(spec.p * spec.N, lam_max + 1.0);
  const OcpSolution pen = solve_penalized_ocp(spec, c.theta_star, rho);
  add(report, name + ": exact penalty matches constrained solve", traj_distance(pen.traj, c.optimum.traj),
      1e-6, "rho = max lambda + 1 = " + detail::format_double(lam_max + 1.0));

  // Negative control: a penalty below the largest multiplier must move the optimum.
  if (lam_max > 1e-6) {
    const Vector low = Vector::Constant(spec.p * spec.N, 0.5 * lam_max);
    const OcpSolution weak = solve_penalized_ocp(spec, c.theta_star, low);
    add(report, name + ": penalty below max lambda diverges", traj_distance(weak.traj, c.optimum.traj),
        1e-6, "rho = max lambda / 2", false);
  }

  // Inverse KKT and inverse exact penalty agree at the optimum.
  EstimatorOptions eo;
  eo.anchor = Anchor{0, c.theta_star[0]};
  const EstimationResult kkt = estimate_exact_kkt(spec, c.optimum.traj, eo);
  Regression reg = exact_ep_regression(spec, c.optimum.traj, eo.activation_tol);
  if (options.corrupt_rho_sign) reg.J_dual = -reg.J_dual;
  const EstimationResult ep = solve_regression(reg, *eo.anchor, Method::EXACT_EP);
  add(report, name + ": inverse KKT and inverse penalty theta agree",
      (kkt.theta - ep.theta).lpNorm<Eigen::Infinity>(), 1e-8);
  double dual_gap = 0.0;
  for (Index i = 0; i < kkt.duals.size(); ++i) {
    if (kkt.mask[static_cast<std::size_t>(i)]) dual_gap = std::max(dual_gap, std::abs(kkt.duals[i] - ep.duals[i]));
  }
  add(report, name + ": retained penalty weights equal active multipliers", dual_gap, 1e-8);
  add(report, name + ": inverse KKT recovers theta", rmse(kkt.theta, c.theta_star), 1e-6);

  // Finite-difference checks of every analytic Jacobian on random trajectories.
  std::mt19937_64 rng(options.seed + stream);
  std::normal_distribution<double> normal(0.0, 0.1);
  double worst[6] = {0, 0, 0, 0, 0, 0};
  const char* labels[6] = {"features", "dynamics", "constraints", "constraint max",
                           "feature hessian", "dynamics hessian"};
  for (int t = 0; t < options.fd_trajectories; ++t) {
    Vector z = c.optimum.traj.decision();
    for (Index i = 0; i < z.size(); ++i) z[i] += normal(rng);
    const Trajectory traj = from_decision(spec, z);
    auto features_sum = [&](const Vector& y) {
      const Trajectory tr = from_decision(spec, y);
      Vector s = Vector::Zero(spec.q);
      for (int k = 0; k < spec.N; ++k) s += spec.features.value(tr.state(k), tr.input(k));
      return s;
    };
    auto dyn = [&](const Vector& y) { return eval_dynamics(spec, from_decision(spec, y)); };
    auto con = [&](const Vector& y) { return eval_constraints(spec, from_decision(spec, y)); };
    auto gmax = [&](const Vector& y) { return eval_gmax(spec, from_decision(spec, y)); };
    const FdReport r[4] = {
        finite_difference_check(features_sum, z, eval_features_sum_jacobian(spec, traj).transpose(), 1e-5, FdScale::relative),
        finite_difference_check(dyn, z, eval_dynamics_jacobian(spec, traj).transpose(), 1e-5, FdScale::relative),
        finite_difference_check(con, z, eval_constraints_jacobian(spec, traj).transpose(), 1e-5, FdScale::relative),
        finite_difference_check(gmax, z, eval_gmax_jacobian(spec, traj).transpose(), 1e-5, FdScale::relative)};
    for (int i = 0; i < 4; ++i) worst[i] = std::max(worst[i], r[i].max_deviation);

    // Hessians: differentiate w' J at one stage.
    const int k = t % spec.N;
    Vector w(spec.q);
    for (Index i = 0; i < w.size(); ++i) w[i] = normal(rng) * 10.0;
    Vector tk = traj.stage(k);
    auto feat_grad = [&](const Vector& s) {
      return Vector(spec.features.jacobian(s.head(spec.n), s.tail(spec.m)).transpose() * w);
    };
    worst[4] = std::max(worst[4], finite_difference_check(feat_grad, tk,
        spec.features.weighted_hessian(tk.head(spec.n), tk.tail(spec.m), w), 1e-5, FdScale::relative).max_deviation);
    Vector wr(spec.n);
    for (Index i = 0; i < wr.size(); ++i) wr[i] = normal(rng) * 10.0;
    Vector a(2 * spec.n + spec.m);
    a << traj.state(k + 1), traj.state(k), traj.input(k);
    auto dyn_grad = [&](const Vector& s) {
      const DynamicsJacobian J = spec.dynamics.jacobian(s.head(spec.n), s.segment(spec.n, spec.n), s.tail(spec.m));
      Matrix full(spec.n, 2 * spec.n + spec.m);
      full << J.d_next, J.d_state, J.d_input;
      return Vector(full.transpose() * wr);
    };
    worst[5] = std::max(worst[5], finite_difference_check(dyn_grad, a,
        spec.dynamics.weighted_hessian(a.head(spec.n), a.segment(spec.n, spec.n), a.tail(spec.m), wr),
        1e-5, FdScale::relative).max_deviation);
  }
  for (int i = 0; i < 6; ++i) {
    report.checks.push_back({name + ": " + labels[i] + " jacobian vs finite differences", worst[i] < 1e-5,
                             worst[i], 1e-5, std::to_string(options.fd_trajectories) + " random trajectories"});
  }
}

void verify_psi(VerifyReport& report, const VerifyOptions& options) {
  const std::vector<double> sigmas{0.1, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> mus;
  for (int i = 0; i < 9; ++i) mus.push_back(-2.0 + 0.5 * i);

  // Antithetic pairs: psi_draws standard normals in total.
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(static_cast<std::size_t>(options.psi_draws / 2));
  for (double& v : z) v = normal(rng);

  double worst_mc = 0.0;
  double worst_fd = 0.0;
  for (double sigma : sigmas) {
    for (double mu : mus) {
      double acc = 0.0;
      for (double v : z) acc += std::max(0.0, mu + sigma * v) + std::max(0.0, mu - sigma * v);
      const double mc = acc / (2.0 * static_cast<double>(z.size()));
      worst_mc = std::max(worst_mc, std::abs(mc - psi(mu, sigma)));
      const double h = 1e-5;
      const double fd = (psi(mu + h, sigma) - psi(mu - h, sigma)) / (2.0 * h);
      worst_fd = std::max(worst_fd, std::abs(fd - psi_dmu(mu, sigma)));
    }
  }
  add(report, "psi vs Monte Carlo on 9x5 grid", worst_mc, 1e-3,
      std::to_string(2 * z.size()) + " draws");
  add(report, "psi_dmu vs finite differences of psi", worst_fd, 1e-8);
  add(report, "psi(0, 1) equals 1/sqrt(2 pi)", std::abs(psi(0.0, 1.0) - 0.3989422804014327), 1e-15);
}

// ---- serialization ------------------------------------------------------

const char* kColumns = "system\testimator\tpct\tmean_rmse\tstd_rmse\treps_ok\tnote";

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    const char next = s[++i];
    out += next == 't' ? '\t' : next == 'n' ? '\n' : next == 'r' ? '\r' : next;
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) return parts;
    start = pos + 1;
  }
}

double number_field(const std::string& text, int line, const std::string& field) {
  const auto v = detail::parse_double(text);
  if (!v) throw ParseError(line, field, "not a number: '" + text + "'");
  return *v;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

std::string tsv_text(const ResultTable& t) {
  std::ostringstream out;
  out << "# kind\t" << escape(t.kind) << '\n';
  out << "# config_hash\t" << escape(t.config_hash) << '\n';
  out << "# anchor_policy\t" << escape(t.anchor_policy) << '\n';
  out << "# seeds\t";
  for (std::size_t i = 0; i < t.seeds.size(); ++i) out << (i ? "," : "") << t.seeds[i];
  out << '\n' << kColumns << '\n';
  for (const ResultCell& c : t.cells) {
    out << escape(c.system) << '\t' << escape(c.estimator) << '\t' << detail::format_double(c.pct) << '\t'
        << detail::format_double(c.mean_rmse) << '\t' << detail::format_double(c.std_rmse) << '\t'
        << c.reps_ok << '\t' << escape(c.note) << '\n';
  }
  return out.str();
}

ResultTable parse_tsv(const std::string& text) {
  ResultTable t;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!header_seen && line.rfind("# ", 0) == 0) {
      const std::size_t tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError(lineno, "metadata", "missing tab");
      const std::string key = line.substr(2, tab - 2);
      const std::string value = unescape(line.substr(tab + 1));
      if (key == "kind") {
        t.kind = value;
      } else if (key == "config_hash") {
        t.config_hash = value;
      } else if (key == "anchor_policy") {
        t.anchor_policy = value;
      } else if (key == "seeds") {
        if (!value.empty()) {
          for (const std::string& s : split(value, ',')) {
            try {
              t.seeds.push_back(std::stoull(s));
            } catch (const std::exception&) {
              throw ParseError(lineno, "seeds", "bad seed '" + s + "'");
            }
          }
        }
      } else {
        throw ParseError(lineno, key, "unknown metadata key");
      }
      continue;
    }
    if (!header_seen) {
      if (line != kColumns) throw ParseError(lineno, "columns", "unexpected column header");
      header_seen = true;
      continue;
    }
    const std::vector<std::string> f = split(line, '\t');
    if (f.size() != 7) throw ParseError(lineno, "row", "expected 7 fields");
    ResultCell c;
    c.system = unescape(f[0]);
    c.estimator = unescape(f[1]);
    c.pct = number_field(f[2], lineno, "pct");
    c.mean_rmse = number_field(f[3], lineno, "mean_rmse");
    c.std_rmse = number_field(f[4], lineno, "std_rmse");
    c.reps_ok = static_cast<int>(number_field(f[5], lineno, "reps_ok"));
    c.note = unescape(f[6]);
    t.cells.push_back(std::move(c));
  }
  if (!header_seen) throw ParseError(lineno, "columns", "missing column header");
  return t;
}

std::string json_text(const ResultTable& t) {
  json j;
  j["kind"] = t.kind;
  j["config_hash"] = t.config_hash;
  j["anchor_policy"] = t.anchor_policy;
  j["seeds"] = t.seeds;
  j["columns"] = split(kColumns, '\t');
  j["cells"] = json::array();
  for (const ResultCell& c : t.cells) {
    j["cells"].push_back({{"system", c.system},
                          {"estimator", c.estimator},
                          {"pct", c.pct},
                          {"mean_rmse", number_or_null(c.mean_rmse)},
                          {"std_rmse", number_or_null(c.std_rmse)},
                          {"reps_ok", c.reps_ok},
                          {"note", c.note}});
  }
  return j.dump(2) + "\n";
}

ResultTable parse_json(const std::string& text) {
  ResultTable t;
  try {
    const json j = json::parse(text);
    t.kind = j.at("kind").get<std::string>();
    t.config_hash = j.at("config_hash").get<std::string>();
    t.anchor_policy = j.at("anchor_policy").get<std::string>();
    t.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const json& c : j.at("cells")) {
      t.cells.push_back({c.at("system").get<std::string>(), c.at("estimator").get<std::string>(),
                         c.at("pct").get<double>(), number_from(c.at("mean_rmse")),
                         number_from(c.at("std_rmse")), c.at("reps_ok").get<int>(),
                         c.at("note").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(0, "json", e.what());
  }
  return t;
}

void set_anchor(ExperimentConfig& cfg, const json& value) {
  if (value.is_number_integer()) {
    cfg.anchor_index = value.get<int>();
    cfg.anchor_value.reset();
    return;
  }
  const std::string text = value.get<std::string>();
  const std::size_t colon = text.find(':');
  try {
    cfg.anchor_index = std::stoi(text.substr(0, colon));
    if (colon == std::string::npos) {
      cfg.anchor_value.reset();
    } else {
      cfg.anchor_value = std::stod(text.substr(colon + 1));
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("bad anchor '" + text + "', expected INDEX or INDEX:VALUE");
  }
}

template <class T>
std::vector<T> one_or_many(const json& j) {
  if (j.is_array()) return j.get<std::vector<T>>();
  return {j.get<T>()};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (systems.empty()) throw std::invalid_argument("config: no systems");
  for (const std::string& s : systems) {
    const auto& names = system_names();
    if (std::find(names.begin(), names.end(), s) == names.end()) {
      throw std::invalid_argument("config: unknown system '" + s + "'");
    }
  }
  if (reps < 1) throw std::invalid_argument("config: repetitions must be at least 1");
  if (D < 1) throw std::invalid_argument("config: D must be at least 1");
  for (double p : pcts) {
    if (!(p >= 0.0)) throw std::invalid_argument("config: noise pcts must be nonnegative");
  }
  if (anchor_index < 0) throw std::invalid_argument("config: anchor index must be nonnegative");
  if (anchor_value && (*anchor_value == 0.0 || !std::isfinite(*anchor_value))) {
    throw std::invalid_argument("config: anchor value must be finite and nonzero");
  }
  if (robustness) {
    if (!(robustness->half_width >= 0.0 && robustness->half_width < 1.0)) {
      throw std::invalid_argument("config: robustness half-width must lie in [0, 1)");
    }
    for (const std::string& s : systems) system_param(s, robustness->param);
  }
}

std::string ExperimentConfig::anchor_policy() const {
  const std::string idx = std::to_string(anchor_index);
  if (anchor_value) return "theta[" + idx + "] = " + detail::format_double(*anchor_value);
  return "theta[" + idx + "] = theta*[" + idx + "]";
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["systems"] = cfg.systems;
  j["pcts"] = cfg.pcts;
  j["D"] = cfg.D;
  j["reps"] = cfg.reps;
  j["seed"] = cfg.seed;
  std::vector<std::string> est;
  for (Method m : cfg.estimators) est.push_back(to_string(m));
  j["estimators"] = est;
  j["cutoff"] = cfg.cutoff;
  j["noiseless_pct"] = cfg.noiseless_pct;
  j["anchor_index"] = cfg.anchor_index;
  j["anchor_value"] = cfg.anchor_value ? json(*cfg.anchor_value) : json(nullptr);
  if (cfg.robustness) {
    j["robustness"] = {{"param", cfg.robustness->param}, {"half_width", cfg.robustness->half_width}};
  } else {
    j["robustness"] = nullptr;
  }
  return j.dump();
}

ExperimentConfig config_from_json(const std::string& json_text, ExperimentConfig cfg) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "system" || key == "systems") {
        cfg.systems = one_or_many<std::string>(value);
      } else if (key == "pct" || key == "pcts") {
        cfg.pcts = one_or_many<double>(value);
      } else if (key == "D") {
        cfg.D = value.get<int>();
      } else if (key == "reps") {
        cfg.reps = value.get<int>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "estimators") {
        cfg.estimators.clear();
        for (const std::string& s : one_or_many<std::string>(value)) cfg.estimators.push_back(method_from_string(s));
      } else if (key == "cutoff") {
        cfg.cutoff = value.get<double>();
      } else if (key == "noiseless_pct") {
        cfg.noiseless_pct = value.get<double>();
      } else if (key == "anchor") {
        set_anchor(cfg, value);
      } else if (key == "anchor_index") {
        cfg.anchor_index = value.get<int>();
      } else if (key == "anchor_value") {
        cfg.anchor_value = value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
      } else if (key == "robustness") {
        if (value.is_null()) {
          cfg.robustness.reset();
        } else {
          RobustnessBlock rb;
          if (value.contains("param")) rb.param = value.at("param").get<std::string>();
          if (value.contains("half_width")) rb.half_width = value.at("half_width").get<double>();
          cfg.robustness = rb;
        }
      } else if (key != "out" && key != "format") {
        throw std::invalid_argument("config: unknown field '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return cfg;
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const ResultCell& ResultTable::at(const std::string& system, const std::string& estimator,
                                  double pct) const {
  for (const ResultCell& c : cells) {
    if (c.system == system && c.estimator == estimator && c.pct == pct) return c;
  }
  throw std::out_of_range("no result cell for " + system + "/" + estimator + "/" +
                          detail::format_double(pct));
}

int worker_count() {
  if (const char* env = std::getenv("IOC_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ResultTable run_benchmark(const ExperimentConfig& cfg) { return run_cells(cfg, false); }

ResultTable run_robustness(const ExperimentConfig& cfg) { return run_cells(cfg, true); }

bool VerifyReport::passed() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.passed; });
}

VerifyReport run_verify(const VerifyOptions& options) {
  VerifyReport report;
  const std::vector<std::string>& names = system_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string& name = names[i];
    try {
      verify_system(report, name, i + 1, options);
    } catch (const std::exception& e) {
      report.checks.push_back({name + ": verification run", false, kNaN, 0.0, e.what()});
    }
  }
  verify_psi(report, options);
  return report;
}

ResultFormat format_from_string(const std::string& name) {
  if (name == "tsv") return ResultFormat::tsv;
  if (name == "json") return ResultFormat::json;
  throw std::invalid_argument("unknown format '" + name + "', expected tsv or json");
}

std::string results_to_string(const ResultTable& table, ResultFormat format) {
  return format == ResultFormat::tsv ? tsv_text(table) : json_text(table);
}

ResultTable parse_results(const std::string& text, ResultFormat format) {
  return format == ResultFormat::tsv ? parse_tsv(text) : parse_json(text);
}

void emit_results(const ResultTable& table, const std::filesystem::path& path, ResultFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << results_to_string(table, format);
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

ResultTable load_results(const std::filesystem::path& path, ResultFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_results(ss.str(), format);
}

}  // namespace ioc
