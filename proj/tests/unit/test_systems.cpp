#include <doctest.h>

#include "ioc/demos.hpp"
#include "ioc/finite_difference.hpp"
#include "ioc/ocp_solver.hpp"
#include "ioc/systems.hpp"

#include <cmath>
#include <random>

using namespace ioc;

TEST_SUITE("systems") {

TEST_CASE("default parameters") {
  const MsdParams m;
  CHECK(m.mass == 1.0);
  CHECK(m.spring == 0.2);
  CHECK(m.damper == 0.1);
  const PendulumParams p;
  CHECK(p.mass == 1.0);
  CHECK(p.length == 0.8);
  CHECK(p.gravity == 9.81);
  CHECK(BicycleParams{}.car_length == 0.115);
  for (const std::string& name : system_names()) CHECK(make_system(name).dt == 0.1);
  CHECK(system_param("bicycle", "car_length") == 0.115);
}

TEST_CASE("true weights") {
  CHECK(*make_msd().theta_true == Eigen::Vector3d(10, 5, 7));
  CHECK(*make_pendulum().theta_true == Eigen::Vector3d(10, 5, 7));
  Vector b(6);
  b << 10, 10, 3, 3, 8, 5;
  CHECK(*make_bicycle().theta_true == b);
}

TEST_CASE("equilibria have zero residual") {
  const OcpSpec msd = make_msd();
  CHECK(msd.dynamics.residual(Vector::Zero(2), Vector::Zero(2), Vector::Zero(1)).norm() == 0.0);
  const OcpSpec pend = make_pendulum();
  CHECK(pend.dynamics.residual(Vector::Zero(2), Vector::Zero(2), Vector::Zero(1)).norm() == 0.0);
  const OcpSpec bike = make_bicycle();
  CHECK(bike.dynamics.residual(Vector::Zero(4), Vector::Zero(4), Vector::Zero(2)).norm() == 0.0);
}

TEST_CASE("spring system step equals the direct linear solve") {
  const MsdParams P;
  const OcpSpec s = make_msd(P);
  Matrix Ac(2, 2);
  Ac << 0.0, 1.0, -P.spring / P.mass, -P.damper / P.mass;
  const Vector x = Eigen::Vector2d(1.0, 0.0);
  const Vector expect = (Matrix::Identity(2, 2) - P.dt * Ac).lu().solve(x);
  const StepResult r = step_dynamics(s, x, Vector::Zero(1), 0);
  CHECK((r.x_next - expect).norm() < 1e-12);
  CHECK(s.dynamics.residual(r.x_next, x, Vector::Zero(1)).norm() < 1e-12);
}

TEST_CASE("pendulum step matches a damped fixed-point oracle") {
  const PendulumParams P;
  const OcpSpec s = make_pendulum(P);
  const Vector x = Eigen::Vector2d(1.5, 0.5);
  // x_next = x + dt f(x_next), relaxed with a small step so the map contracts.
  Vector y = x;
  const double alpha = 0.05;
  for (int it = 0; it < 20000; ++it) {
    Vector f(2);
    f << y[1], -P.gravity / P.length * std::sin(y[0]);
    y = (1.0 - alpha) * y + alpha * (x + P.dt * f);
  }
  const StepResult r = step_dynamics(s, x, Vector::Zero(1), 0);
  CHECK((r.x_next - y).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("straight-line drive of the bicycle") {
  const OcpSpec s = make_bicycle();
  Vector U = Vector::Zero(s.m * s.N);
  for (int k = 0; k < s.N; ++k) U[k * s.m] = 1.0;
  const Trajectory t = rollout(s, U);
  for (int k = 0; k <= s.N; ++k) {
    CHECK(t.state(k)[0] == doctest::Approx(0.1 * k).epsilon(1e-12));
    CHECK(t.state(k).tail(3).norm() == 0.0);
  }
}

TEST_CASE("steering singularity names the stage") {
  const OcpSpec s = make_bicycle();
  Vector U = Vector::Zero(s.m * s.N);
  U[2 * 2 + 1] = (M_PI / 2.0) / s.dt;  // steering reaches pi/2 in stage 2
  U[2 * 2] = 1.0;
  try {
    rollout(s, U);
    FAIL("expected a StepError");
  } catch (const StepError& e) {
    CHECK(e.stage() == 2);
    CHECK(std::string(e.what()).find("stage 2") != std::string::npos);
  }
}

TEST_CASE("parameter overrides and unknown names") {
  const OcpSpec s = make_system("bicycle", {{"car_length", 0.12}});
  const OcpSpec d = make_bicycle();
  const Vector xn = Vector::Constant(4, 0.1);
  CHECK(s.dynamics.residual(xn, Vector::Zero(4), Vector::Ones(2)) !=
        d.dynamics.residual(xn, Vector::Zero(4), Vector::Ones(2)));
  CHECK(make_system("msd", {{"horizon", 5}}).N == 5);
  CHECK_THROWS_AS(make_system("cartpole"), std::invalid_argument);
  CHECK_THROWS_AS(make_system("msd", {{"car_length", 1.0}}), std::invalid_argument);
}

TEST_CASE("analytic derivatives agree with finite differences at random points") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> d(0.0, 0.5);
  for (const std::string& name : system_names()) {
    CAPTURE(name);
    const OcpSpec s = make_system(name);
    for (int trial = 0; trial < 20; ++trial) {
      Vector a(2 * s.n + s.m);
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = d(rng);
      const Vector xn = a.head(s.n), x = a.segment(s.n, s.n), u = a.tail(s.m);
      const DynamicsJacobian D = s.dynamics.jacobian(xn, x, u);
      Matrix J(s.n, a.size());
      J << D.d_next, D.d_state, D.d_input;
      const VectorMap r = [&](const Vector& y) {
        return s.dynamics.residual(y.head(s.n), y.segment(s.n, s.n), y.tail(s.m));
      };
      CHECK(finite_difference_check(r, a, J, 1e-5, FdScale::relative).passed);

      const Vector t = a.tail(s.n + s.m);
      const VectorMap phi = [&](const Vector& y) { return s.features.value(y.head(s.n), y.tail(s.m)); };
      CHECK(finite_difference_check(phi, t, s.features.jacobian(t.head(s.n), t.tail(s.m)), 1e-5,
                                    FdScale::relative).passed);
      const VectorMap g = [&](const Vector& y) { return Vector(s.H * y - s.h); };
      CHECK(finite_difference_check(g, t, s.H, 1e-5, FdScale::relative).passed);
    }
  }
}

TEST_CASE("implicit steps converge quickly along noisy demonstrations") {
  for (const std::string& name : system_names()) {
    CAPTURE(name);
    const OcpSpec s = make_system(name);
    const OcpSolution opt = solve_ocp(s, *s.theta_true);
    const DemoSet ds = generate_demoset(s, opt, *s.theta_true,
                                        make_noise_spec(s, opt.traj.U(), 0.10, 3), 10);
    int worst = 0;
    for (const Trajectory& demo : ds.demos) {
      for (int k = 0; k < s.N; ++k) {
        worst = std::max(worst, step_dynamics(s, demo.state(k), demo.input(k), k).iterations);
      }
    }
    CHECK(worst <= 10);
  }
}

}  // TEST_SUITE
