#include "ioc/systems.hpp"

#include <cmath>
#include <stdexcept>

namespace ioc {

namespace {

Vector stack(const Vector& x, const Vector& u) {
  Vector t(x.size() + u.size());
  t << x, u;
  return t;
}

// Bound on |cos(steering angle)| below which tan() is treated as singular.
constexpr double kTanGuard = 1e-6;

double checked_cos(double angle) {
  const double c = std::cos(angle);
  if (std::abs(c) < kTanGuard) {
    throw std::domain_error("tan singularity: steering angle " + std::to_string(angle) +
                            " too close to pi/2");
  }
  return c;
}

}  // namespace

FeatureMap squared_deviation_features(std::vector<int> indices, std::vector<double> refs) {
  if (indices.size() != refs.size()) {
    throw std::invalid_argument("squared_deviation_features: indices/refs length mismatch");
  }
  FeatureMap f;
  f.value = [indices, refs](const Vector& x, const Vector& u) {
    const Vector t = stack(x, u);
    Vector phi(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const double d = t[indices[i]] - refs[i];
      phi[static_cast<Eigen::Index>(i)] = d * d;
    }
    return phi;
  };
  f.jacobian = [indices, refs](const Vector& x, const Vector& u) {
    const Vector t = stack(x, u);
    Matrix J = Matrix::Zero(static_cast<Eigen::Index>(indices.size()), t.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      J(static_cast<Eigen::Index>(i), indices[i]) = 2.0 * (t[indices[i]] - refs[i]);
    }
    return J;
  };
  f.weighted_hessian = [indices](const Vector& x, const Vector& u, const Vector& w) {
    Matrix Hs = Matrix::Zero(x.size() + u.size(), x.size() + u.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      Hs(indices[i], indices[i]) += 2.0 * w[static_cast<Eigen::Index>(i)];
    }
    return Hs;
  };
  return f;
}

OcpSpec make_msd(const MsdParams& P) {
  if (P.mass <= 0 || P.spring < 0 || P.damper < 0 || P.dt <= 0) {
    throw std::invalid_argument("make_msd: physical constants must be positive");
  }
  OcpSpec s;
  s.name = "msd";
  s.n = 2;
  s.m = 1;
  s.N = P.horizon;
  s.q = 3;
  s.p = 1;
  s.dt = P.dt;
  s.x0 = Eigen::Vector2d(1.0, 0.1);
  // Continuous dynamics are linear: xdot = A x + B u.
  Matrix A(2, 2);
  A << 0.0, 1.0, -P.spring / P.mass, -P.damper / P.mass;
  Vector B(2);
  B << 0.0, 1.0 / P.mass;
  const double dt = P.dt;
  s.dynamics.residual = [A, B, dt](const Vector& xn, const Vector& x, const Vector& u) -> Vector {
    return xn - x - dt * (A * xn + B * u[0]);
  };
  s.dynamics.jacobian = [A, B, dt](const Vector&, const Vector&, const Vector&) {
    DynamicsJacobian D;
    D.d_next = Matrix::Identity(2, 2) - dt * A;
    D.d_state = -Matrix::Identity(2, 2);
    D.d_input = -dt * B;
    return D;
  };
  s.dynamics.weighted_hessian = [](const Vector&, const Vector&, const Vector&, const Vector&) {
    return Matrix::Zero(5, 5).eval();
  };
  s.features = squared_deviation_features({0, 1, 2}, {3.0, 0.0, 0.0});
  s.H = Matrix(1, 3);
  s.H << 0.0, 0.0, 1.0;
  s.h = Vector::Constant(1, P.u_max);
  s.theta_true = Eigen::Vector3d(10.0, 5.0, 7.0);
  return s;
}

OcpSpec make_pendulum(const PendulumParams& P) {
  if (P.mass <= 0 || P.length <= 0 || P.gravity <= 0 || P.dt <= 0) {
    throw std::invalid_argument("make_pendulum: physical constants must be positive");
  }
  OcpSpec s;
  s.name = "pendulum";
  s.n = 2;
  s.m = 1;
  s.N = P.horizon;
  s.q = 3;
  s.p = 1;
  s.dt = P.dt;
  s.x0 = Eigen::Vector2d(1.5, 0.5);
  const double dt = P.dt;
  const double g_over_l = P.gravity / P.length;
  const double input_gain = 1.0 / (P.mass * P.length * P.length);
  s.dynamics.residual = [=](const Vector& xn, const Vector& x, const Vector& u) -> Vector {
    Vector r(2);
    r[0] = xn[0] - x[0] - dt * xn[1];
    r[1] = xn[1] - x[1] - dt * (-g_over_l * std::sin(xn[0]) + input_gain * u[0]);
    return r;
  };
  s.dynamics.jacobian = [=](const Vector& xn, const Vector&, const Vector&) {
    DynamicsJacobian D;
    D.d_next = Matrix(2, 2);
    D.d_next << 1.0, -dt, dt * g_over_l * std::cos(xn[0]), 1.0;
    D.d_state = -Matrix::Identity(2, 2);
    D.d_input = Matrix(2, 1);
    D.d_input << 0.0, -dt * input_gain;
    return D;
  };
  // Only d^2 r_1 / d xn_0^2 is nonzero.
  s.dynamics.weighted_hessian = [=](const Vector& xn, const Vector&, const Vector&, const Vector& w) {
    Matrix Hs = Matrix::Zero(5, 5);
    Hs(0, 0) = -w[1] * dt * g_over_l * std::sin(xn[0]);
    return Hs;
  };
  s.features = squared_deviation_features({0, 1, 2}, {0.5, 0.1, 0.0});
  s.H = Matrix(1, 3);
  s.H << 0.0, 0.0, 1.0;
  s.h = Vector::Constant(1, P.u_max);
  s.theta_true = Eigen::Vector3d(10.0, 5.0, 7.0);
  return s;
}

OcpSpec make_bicycle(const BicycleParams& P) {
  if (P.car_length <= 0 || P.dt <= 0) {
    throw std::invalid_argument("make_bicycle: car length and dt must be positive");
  }
  OcpSpec s;
  s.name = "bicycle";
  s.n = 4;
  s.m = 2;
  s.N = P.horizon;
  s.q = 6;
  s.p = 1;
  s.dt = P.dt;
  s.x0 = Vector::Zero(4);
  const double dt = P.dt;
  const double L = P.car_length;
  s.dynamics.residual = [=](const Vector& xn, const Vector& x, const Vector& u) -> Vector {
    const double c4 = checked_cos(xn[3]);
    Vector r(4);
    r[0] = xn[0] - x[0] - dt * u[0] * std::cos(xn[2]);
    r[1] = xn[1] - x[1] - dt * u[0] * std::sin(xn[2]);
    r[2] = xn[2] - x[2] - dt * u[0] * std::sin(xn[3]) / c4 / L;
    r[3] = xn[3] - x[3] - dt * u[1];
    return r;
  };
  s.dynamics.jacobian = [=](const Vector& xn, const Vector&, const Vector& u) {
    const double c4 = checked_cos(xn[3]);
    const double sec2 = 1.0 / (c4 * c4);
    const double s3 = std::sin(xn[2]);
    const double c3 = std::cos(xn[2]);
    DynamicsJacobian D;
    D.d_next = Matrix::Identity(4, 4);
    D.d_next(0, 2) = dt * u[0] * s3;
    D.d_next(1, 2) = -dt * u[0] * c3;
    D.d_next(2, 3) = -dt * u[0] * sec2 / L;
    D.d_state = -Matrix::Identity(4, 4);
    D.d_input = Matrix::Zero(4, 2);
    D.d_input(0, 0) = -dt * c3;
    D.d_input(1, 0) = -dt * s3;
    D.d_input(2, 0) = -dt * std::sin(xn[3]) / c4 / L;
    D.d_input(3, 1) = -dt;
    return D;
  };
  // Argument ordering (xn[0..3], x[0..3], u[0..1]): xn3 -> 2, xn4 -> 3, u1 -> 8.
  s.dynamics.weighted_hessian = [=](const Vector& xn, const Vector&, const Vector& u, const Vector& w) {
    const double c4 = checked_cos(xn[3]);
    const double t4 = std::sin(xn[3]) / c4;
    const double sec2 = 1.0 / (c4 * c4);
    const double s3 = std::sin(xn[2]);
    const double c3 = std::cos(xn[2]);
    Matrix Hs = Matrix::Zero(10, 10);
    Hs(2, 2) = dt * u[0] * (w[0] * c3 + w[1] * s3);
    const double h28 = dt * (w[0] * s3 - w[1] * c3);
    Hs(2, 8) = h28;
    Hs(8, 2) = h28;
    Hs(3, 3) = -w[2] * dt * u[0] * 2.0 * sec2 * t4 / L;
    const double h38 = -w[2] * dt * sec2 / L;
    Hs(3, 8) = h38;
    Hs(8, 3) = h38;
    return Hs;
  };
  s.features = squared_deviation_features({0, 1, 2, 3, 4, 5}, {3.0, 3.0, 0.0, 0.0, 0.0, 0.0});
  s.H = Matrix::Zero(1, 6);
  s.H(0, 5) = 1.0;
  s.h = Vector::Constant(1, P.steer_rate_max);
  Vector theta(6);
  theta << 10.0, 10.0, 3.0, 3.0, 8.0, 5.0;
  s.theta_true = theta;
  return s;
}

const std::vector<std::string>& system_names() {
  static const std::vector<std::string> names{"msd", "pendulum", "bicycle"};
  return names;
}

namespace {

void apply(const std::map<std::string, double*>& slots, const ParamOverrides& overrides,
           const std::string& system) {
  for (const auto& [key, value] : overrides) {
    auto it = slots.find(key);
    if (it == slots.end()) {
      throw std::invalid_argument("system '" + system + "' has no parameter '" + key + "'");
    }
    *it->second = value;
  }
}

}  // namespace

OcpSpec make_system(const std::string& name, const ParamOverrides& overrides) {
  double horizon = -1.0;
  if (name == "msd") {
    MsdParams P;
    horizon = P.horizon;
    apply({{"mass", &P.mass}, {"spring", &P.spring}, {"damper", &P.damper},
              {"u_max", &P.u_max}, {"dt", &P.dt}, {"horizon", &horizon}},
          overrides, name);
    P.horizon = static_cast<int>(horizon);
    return make_msd(P);
  }
  if (name == "pendulum") {
    PendulumParams P;
    horizon = P.horizon;
    apply({{"mass", &P.mass}, {"length", &P.length}, {"gravity", &P.gravity},
              {"u_max", &P.u_max}, {"dt", &P.dt}, {"horizon", &horizon}},
          overrides, name);
    P.horizon = static_cast<int>(horizon);
    return make_pendulum(P);
  }
  if (name == "bicycle") {
    BicycleParams P;
    horizon = P.horizon;
    apply({{"car_length", &P.car_length}, {"steer_rate_max", &P.steer_rate_max},
              {"dt", &P.dt}, {"horizon", &horizon}},
          overrides, name);
    P.horizon = static_cast<int>(horizon);
    return make_bicycle(P);
  }
  throw std::invalid_argument("unknown system '" + name + "' (expected msd, pendulum or bicycle)");
}

double system_param(const std::string& name, const std::string& param) {
  const std::map<std::string, std::map<std::string, double>> defaults{
      {"msd", {{"mass", MsdParams{}.mass}, {"spring", MsdParams{}.spring},
               {"damper", MsdParams{}.damper}, {"u_max", MsdParams{}.u_max},
               {"dt", MsdParams{}.dt}}},
      {"pendulum", {{"mass", PendulumParams{}.mass}, {"length", PendulumParams{}.length},
                    {"gravity", PendulumParams{}.gravity}, {"u_max", PendulumParams{}.u_max},
                    {"dt", PendulumParams{}.dt}}},
      {"bicycle", {{"car_length", BicycleParams{}.car_length},
                   {"steer_rate_max", BicycleParams{}.steer_rate_max},
                   {"dt", BicycleParams{}.dt}}}};
  auto sys = defaults.find(name);
  if (sys == defaults.end()) throw std::invalid_argument("unknown system '" + name + "'");
  auto it = sys->second.find(param);
  if (it == sys->second.end()) {
    throw std::invalid_argument("system '" + name + "' has no parameter '" + param + "'");
  }
  return it->second;
}

}  // namespace ioc
