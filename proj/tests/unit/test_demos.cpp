#include <doctest.h>

#include "ioc/demos.hpp"
#include "ioc/systems.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ioc;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("ioc_test_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

struct Fixture {
  OcpSpec spec = make_msd();
  OcpSolution opt = solve_ocp(spec, *spec.theta_true);
};

}  // namespace

TEST_SUITE("demos") {

TEST_CASE("noise spec follows the mean input") {
  const OcpSpec s = make_msd();
  const Vector u = Vector::Constant(s.N, 0.4);
  const NoiseSpec ns = make_noise_spec(s, u, 0.10, 7);
  CHECK(std::sqrt(ns.sigma_t(2, 2)) == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(ns.sigma_t.topLeftCorner(2, 2).norm() == 0.0);
  CHECK(ns.sigma_xN.norm() == 0.0);
  CHECK(ns.seed == 7);
  CHECK(make_noise_spec(s, u, 0.0).sigma_t.norm() == 0.0);
  CHECK_THROWS_AS(make_noise_spec(s, u, -0.01), std::invalid_argument);
}

TEST_CASE("zero noise reproduces the optimum") {
  Fixture f;
  const DemoSet ds = generate_demoset(f.spec, f.opt, *f.spec.theta_true,
                                      make_noise_spec(f.spec, f.opt.traj.U(), 0.0), 3);
  REQUIRE(ds.size() == 3);
  for (const Trajectory& d : ds.demos) CHECK(d == f.opt.traj);
  CHECK(ds.truth->traj == f.opt.traj);
  CHECK(ds.spec_name == "msd");
}

TEST_CASE("seeded generation is deterministic") {
  Fixture f;
  const NoiseSpec ns = make_noise_spec(f.spec, f.opt.traj.U(), 0.05, 11);
  const DemoSet a = generate_demoset(f.spec, *f.spec.theta_true, ns, 5);
  const DemoSet b = generate_demoset(f.spec, *f.spec.theta_true, ns, 5);
  for (int d = 0; d < 5; ++d) CHECK(a.demos[d] == b.demos[d]);
  const DemoSet c = generate_demoset(f.spec, *f.spec.theta_true,
                                     make_noise_spec(f.spec, f.opt.traj.U(), 0.05, 12), 5);
  CHECK_FALSE(a.demos[0] == c.demos[0]);
}

TEST_CASE("mean trajectory") {
  Fixture f;
  const NoiseSpec ns = make_noise_spec(f.spec, f.opt.traj.U(), 0.10, 5);
  const DemoSet ds = generate_demoset(f.spec, f.opt, *f.spec.theta_true, ns, 10);

  // Welford-style running mean as an independent accumulation.
  Vector X = Vector::Zero(ds.demos[0].X().size()), U = Vector::Zero(ds.demos[0].U().size());
  for (int d = 0; d < ds.size(); ++d) {
    X += (ds.demos[d].X() - X) / (d + 1.0);
    U += (ds.demos[d].U() - U) / (d + 1.0);
  }
  const Trajectory m = mean_trajectory(ds);
  CHECK((m.X() - X).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((m.U() - U).lpNorm<Eigen::Infinity>() < 1e-12);

  DemoSet one = ds;
  one.demos.resize(1);
  CHECK(mean_trajectory(one) == ds.demos[0]);

  DemoSet pair = ds;
  Trajectory mirrored = f.opt.traj;
  mirrored.X() = 2.0 * f.opt.traj.X() - ds.demos[0].X();
  mirrored.U() = 2.0 * f.opt.traj.U() - ds.demos[0].U();
  pair.demos = {ds.demos[0], mirrored};
  const Trajectory c = mean_trajectory(pair);
  CHECK((c.U() - f.opt.traj.U()).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("empirical noise statistics") {
  const OcpSpec s = make_bicycle();
  const OcpSolution opt = solve_ocp(s, *s.theta_true);
  NoiseSpec ns;
  ns.sigma_t = Matrix::Zero(6, 6);
  ns.sigma_t(4, 4) = 0.04;
  ns.sigma_t(5, 5) = 0.09;
  ns.sigma_t(4, 5) = ns.sigma_t(5, 4) = 0.03;
  ns.sigma_t(0, 0) = 0.01;
  ns.sigma_xN = 0.02 * Matrix::Identity(4, 4);
  ns.seed = 3;
  const int D = 10000;
  const DemoSet ds = generate_demoset(s, opt, *s.theta_true, ns, D);

  const int k = 4;
  Vector mean = Vector::Zero(6);
  for (const Trajectory& d : ds.demos) mean += d.stage(k);
  mean /= D;
  Matrix cov = Matrix::Zero(6, 6);
  double cross = 0.0;
  for (const Trajectory& d : ds.demos) {
    const Vector e = d.stage(k) - mean;
    cov += e * e.transpose();
    cross += (d.stage(k)[4] - opt.traj.stage(k)[4]) * (d.stage(k + 1)[4] - opt.traj.stage(k + 1)[4]);
  }
  cov /= D - 1.0;
  cross /= D * 0.04;
  CHECK((mean - opt.traj.stage(k)).lpNorm<Eigen::Infinity>() < 4.0 * 0.3 / std::sqrt(D));
  CHECK((cov - ns.sigma_t).norm() <= 0.05 * ns.sigma_t.norm());
  CHECK(std::abs(cross) < 0.02 + 4.0 / std::sqrt(D));

  NoiseSpec bad = ns;
  bad.sigma_t(4, 5) = bad.sigma_t(5, 4) = 1.0;
  CHECK_THROWS_AS(generate_demoset(s, opt, *s.theta_true, bad, 2), std::invalid_argument);
}

TEST_CASE("save and load") {
  Fixture f;
  const NoiseSpec ns = make_noise_spec(f.spec, f.opt.traj.U(), 0.05, 9);
  const DemoSet ds = generate_demoset(f.spec, f.opt, *f.spec.theta_true, ns, 4);
  const auto path = temp_path("roundtrip.tsv");
  save_demoset(ds, path);
  const DemoSet back = load_demoset(path, f.spec);
  REQUIRE(back.size() == ds.size());
  for (int d = 0; d < ds.size(); ++d) CHECK(back.demos[d] == ds.demos[d]);
  CHECK(back.spec_name == ds.spec_name);
  REQUIRE(back.noise);
  CHECK(back.noise->sigma_t == ds.noise->sigma_t);
  CHECK(back.noise->seed == 9);
  CHECK(back.truth->theta == ds.truth->theta);
  CHECK(back.truth->traj == ds.truth->traj);

  CHECK_THROWS_AS(load_demoset(path, make_bicycle()), DimensionError);

  const std::string text = slurp(path);
  std::string versioned = text;
  versioned.replace(versioned.find("\"version\":1"), 11, "\"version\":7");
  const auto vpath = temp_path("version.tsv");
  write(vpath, versioned);
  try {
    load_demoset(vpath);
    FAIL("expected UnsupportedVersionError");
  } catch (const UnsupportedVersionError& e) {
    CHECK(e.version() == 7);
  }

  // Corrupt a number on the fourth data row (file line 6).
  std::istringstream lines(text);
  std::string out, line;
  for (int i = 1; std::getline(lines, line); ++i) {
    if (i == 6) line.replace(line.rfind('\t') + 1, std::string::npos, "abc");
    out += line + "\n";
  }
  const auto ppath = temp_path("parse.tsv");
  write(ppath, out);
  try {
    load_demoset(ppath);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 6);
    CHECK(e.field() == "u0");
  }

  CHECK_THROWS_AS(load_demoset(temp_path("missing.tsv")), std::runtime_error);
  std::filesystem::remove(path);
  std::filesystem::remove(vpath);
  std::filesystem::remove(ppath);
}

}  // TEST_SUITE
