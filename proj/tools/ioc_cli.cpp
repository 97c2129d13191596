#include "ioc/bench.hpp"
#include "ioc/demos.hpp"
#include "ioc/estimators.hpp"
#include "ioc/ocp_solver.hpp"
#include "ioc/systems.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

using namespace ioc;

struct CommonFlags {
  std::vector<std::string> systems;
  std::vector<double> pcts;
  std::vector<std::string> estimators;
  int D = 10;
  int reps = 10;
  std::uint64_t seed = 1;
  double cutoff = 0.005;
  std::string anchor;
  std::string out;
  std::string format = "tsv";
  std::string config;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void add_common(CLI::App* cmd, CommonFlags& f, bool many_systems) {
  if (many_systems) {
    cmd->add_option("--system", f.systems, "System name (repeatable)");
  } else {
    cmd->add_option("--system", f.systems, "System name")->expected(1);
  }
  cmd->add_option("--D", f.D, "Demonstrations per data set")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Base seed")->capture_default_str();
  cmd->add_option("--cutoff", f.cutoff, "Smoothed penalty cutoff")->capture_default_str();
  cmd->add_option("--anchor", f.anchor, "Anchor INDEX or INDEX:VALUE (default 0 at the true value)");
  cmd->add_option("--out", f.out, "Output path (stdout when omitted)");
  cmd->add_option("--config", f.config, "JSON config; its fields override flags");
}

// Flags first, then the config file on top.
ExperimentConfig build_config(const CommonFlags& f, CommonFlags& io) {
  ExperimentConfig cfg;
  if (!f.systems.empty()) cfg.systems = f.systems;
  if (!f.pcts.empty()) cfg.pcts = f.pcts;
  if (!f.estimators.empty()) {
    cfg.estimators.clear();
    for (const std::string& e : f.estimators) cfg.estimators.push_back(method_from_string(e));
  }
  cfg.D = f.D;
  cfg.reps = f.reps;
  cfg.seed = f.seed;
  cfg.cutoff = f.cutoff;
  if (!f.anchor.empty()) cfg = config_from_json(nlohmann::json{{"anchor", f.anchor}}.dump(), cfg);
  if (!f.config.empty()) {
    const std::string text = read_file(f.config);
    cfg = config_from_json(text, cfg);
    const auto j = nlohmann::json::parse(text);
    if (j.contains("out")) io.out = j.at("out").get<std::string>();
    if (j.contains("format")) io.format = j.at("format").get<std::string>();
  }
  cfg.validate();
  return cfg;
}

void write_output(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
}

std::string format_vector(const Vector& v) {
  std::ostringstream ss;
  ss << std::setprecision(10);
  for (Eigen::Index i = 0; i < v.size(); ++i) ss << (i ? " " : "") << v[i];
  return ss.str();
}

int cmd_generate(CommonFlags f, double pct) {
  f.pcts = {pct};
  CommonFlags io = f;
  ExperimentConfig cfg = build_config(f, io);
  if (cfg.pcts.size() != 1) throw std::invalid_argument("generate needs exactly one noise level");
  if (cfg.systems.size() != 1) throw std::invalid_argument("generate needs exactly one --system");
  const OcpSpec spec = make_system(cfg.systems.front());
  const Vector theta = *spec.theta_true;
  const OcpSolution opt = solve_ocp(spec, theta);
  const NoiseSpec noise = make_noise_spec(spec, opt.traj.U(), cfg.pcts.front(), cfg.seed);
  const DemoSet ds = generate_demoset(spec, opt, theta, noise, cfg.D);
  if (io.out.empty()) throw std::invalid_argument("generate needs --out");
  save_demoset(ds, io.out);
  std::cerr << "wrote " << ds.size() << " demonstrations of " << spec.name << " to " << io.out << "\n";
  return 0;
}

int cmd_estimate(const CommonFlags& f, const std::string& demos_path) {
  CommonFlags io = f;
  ExperimentConfig cfg = build_config(f, io);
  DemoSet ds = load_demoset(demos_path);
  const std::string system = f.systems.empty() ? ds.spec_name : cfg.systems.front();
  const OcpSpec spec = make_system(system);
  check_dimensions(spec, ds.demos.front());

  EstimatorOptions opts;
  opts.cutoff = cfg.cutoff;
  if (!f.anchor.empty() || !f.config.empty()) {
    const Vector& ref = ds.truth ? ds.truth->theta : *spec.theta_true;
    opts.anchor = Anchor{cfg.anchor_index, cfg.anchor_value.value_or(ref[cfg.anchor_index])};
  }

  nlohmann::json out = nlohmann::json::array();
  std::ostringstream text;
  text << "method\ttheta\trmse\tresidual\twarnings\n";
  for (Method m : cfg.estimators) {
    const EstimationResult r = estimate(m, spec, ds, opts);
    const double err = ds.truth ? rmse(r.theta, ds.truth->theta) : std::nan("");
    std::string warn;
    for (const std::string& w : r.diagnostics.warnings) warn += (warn.empty() ? "" : "; ") + w;
    text << to_string(m) << '\t' << format_vector(r.theta) << '\t' << err << '\t' << r.residual_norm
         << '\t' << warn << '\n';
    std::vector<double> theta(r.theta.data(), r.theta.data() + r.theta.size());
    out.push_back({{"method", to_string(m)},
                   {"theta", theta},
                   {"rmse", std::isfinite(err) ? nlohmann::json(err) : nlohmann::json(nullptr)},
                   {"residual_norm", r.residual_norm},
                   {"anchor_index", r.diagnostics.anchor.index},
                   {"anchor_value", r.diagnostics.anchor.value},
                   {"sigma_source", r.diagnostics.sigma_source},
                   {"shared_v", r.diagnostics.shared_v},
                   {"warnings", r.diagnostics.warnings}});
  }
  write_output(format_from_string(io.format) == ResultFormat::json ? out.dump(2) + "\n" : text.str(),
               io.out);
  return 0;
}

int cmd_bench(const CommonFlags& f, bool robust, const std::string& param, double half_width) {
  CommonFlags io = f;
  ExperimentConfig cfg = build_config(f, io);
  if (robust) {
    if (!cfg.robustness) cfg.robustness = RobustnessBlock{param, half_width};
    if (f.systems.empty() && f.config.empty()) cfg.systems = {"bicycle"};
    cfg.validate();
  }
  const ResultTable table = robust ? run_robustness(cfg) : run_benchmark(cfg);
  write_output(results_to_string(table, format_from_string(io.format)), io.out);
  return 0;
}

int cmd_verify(bool corrupt, int fd_trajectories) {
  VerifyOptions opts;
  opts.corrupt_rho_sign = corrupt;
  opts.fd_trajectories = fd_trajectories;
  const VerifyReport report = run_verify(opts);
  int failed = 0;
  for (const VerifyCheck& c : report.checks) {
    std::cout << (c.passed ? "PASS  " : "FAIL  ") << c.name << "  value=" << c.value
              << " tol=" << c.tolerance;
    if (!c.detail.empty()) std::cout << "  (" << c.detail << ")";
    std::cout << "\n";
    failed += c.passed ? 0 : 1;
  }
  std::cout << report.checks.size() - failed << "/" << report.checks.size() << " checks passed\n";
  return report.passed() ? 0 : 1;
}

int cmd_emit(const std::string& in, const std::string& in_format, const std::string& out,
             const std::string& format) {
  const ResultTable table = load_results(in, format_from_string(in_format));
  write_output(results_to_string(table, format_from_string(format)), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse optimal control from noisy demonstrations"};
  app.require_subcommand(1);

  CommonFlags gen;
  double gen_pct = 0.05;
  auto* generate = app.add_subcommand("generate", "Solve a benchmark system and write noisy demonstrations");
  add_common(generate, gen, false);
  generate->add_option("--pct", gen_pct, "Noise level as a fraction of the mean input")->capture_default_str();

  CommonFlags est;
  std::string demos_path;
  auto* estimate_cmd = app.add_subcommand("estimate", "Estimate theta from a demonstration file");
  add_common(estimate_cmd, est, false);
  estimate_cmd->add_option("--demos", demos_path, "Demonstration file")->required();
  estimate_cmd->add_option("--method", est.estimators, "kkt, tr, ep, exact_kkt or exact_ep (repeatable)");
  estimate_cmd->add_option("--format", est.format, "tsv or json")->capture_default_str();

  CommonFlags bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run the noise benchmark over systems and noise levels");
  add_common(bench_cmd, bench, true);
  bench_cmd->add_option("--pct", bench.pcts, "Noise levels (repeatable)");
  bench_cmd->add_option("--reps", bench.reps, "Repetitions")->capture_default_str();
  bench_cmd->add_option("--method", bench.estimators, "Estimators (repeatable)");
  bench_cmd->add_option("--format", bench.format, "tsv or json")->capture_default_str();

  CommonFlags robust;
  std::string param = "car_length";
  double half_width = 0.05;
  auto* robust_cmd = app.add_subcommand("robustness", "Benchmark with a perturbed model parameter in estimation");
  add_common(robust_cmd, robust, true);
  robust_cmd->add_option("--pct", robust.pcts, "Noise levels (repeatable)");
  robust_cmd->add_option("--reps", robust.reps, "Repetitions")->capture_default_str();
  robust_cmd->add_option("--method", robust.estimators, "Estimators (repeatable)");
  robust_cmd->add_option("--format", robust.format, "tsv or json")->capture_default_str();
  robust_cmd->add_option("--param", param, "Perturbed parameter")->capture_default_str();
  robust_cmd->add_option("--half-width", half_width, "Relative half-width of the uniform draw")->capture_default_str();

  bool corrupt = false;
  int fd_trajectories = 20;
  auto* verify = app.add_subcommand("verify", "Run the verification suite");
  verify->add_flag("--corrupt-rho-sign", corrupt, "Flip the penalty Jacobian sign (fixture)");
  verify->add_option("--fd-trajectories", fd_trajectories, "Random trajectories per system")->capture_default_str();

  std::string emit_in, emit_in_format = "json", emit_out, emit_format = "tsv";
  auto* emit = app.add_subcommand("emit", "Convert a results file between tsv and json");
  emit->add_option("--in", emit_in, "Input results file")->required();
  emit->add_option("--in-format", emit_in_format, "tsv or json")->capture_default_str();
  emit->add_option("--out", emit_out, "Output path (stdout when omitted)");
  emit->add_option("--format", emit_format, "tsv or json")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return cmd_generate(gen, gen_pct);
    if (*estimate_cmd) return cmd_estimate(est, demos_path);
    if (*bench_cmd) return cmd_bench(bench, false, "", 0.0);
    if (*robust_cmd) return cmd_bench(robust, true, param, half_width);
    if (*verify) return cmd_verify(corrupt, fd_trajectories);
    if (*emit) return cmd_emit(emit_in, emit_in_format, emit_out, emit_format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
