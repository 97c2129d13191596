#pragma once

#include "ioc/core_model.hpp"

#include <map>
#include <string>
#include <vector>

namespace ioc {

/// Mass-spring-damper, backward Euler.
struct MsdParams {
  double mass = 1.0;     // kg
  double spring = 0.2;   // kg s^-2
  double damper = 0.1;   // kg s^-1
  double u_max = 0.55;
  double dt = 0.1;       // s
  int horizon = 10;
};

/// Pendulum with angle measured from the stable equilibrium.
struct PendulumParams {
  double mass = 1.0;     // kg
  double length = 0.8;   // m
  double gravity = 9.81;
  double u_max = 1.90;
  double dt = 0.1;
  int horizon = 10;
};

/// Kinematic bicycle, states (px, py, heading, steering angle),
/// inputs (speed, steering rate).
struct BicycleParams {
  double car_length = 0.115;  // m
  double steer_rate_max = 0.35;
  double dt = 0.1;
  int horizon = 10;
};

OcpSpec make_msd(const MsdParams& params = {});
OcpSpec make_pendulum(const PendulumParams& params = {});
OcpSpec make_bicycle(const BicycleParams& params = {});

/// Named parameter overrides, e.g. {"car_length", 0.12}.
using ParamOverrides = std::map<std::string, double>;

/// Builds "msd", "pendulum" or "bicycle"; unknown names or parameters throw
/// std::invalid_argument.
OcpSpec make_system(const std::string& name, const ParamOverrides& overrides = {});

/// Default value of a named parameter of a named system.
double system_param(const std::string& name, const std::string& param);

const std::vector<std::string>& system_names();

/// Features phi_i(t) = (t[index_i] - ref_i)^2 over t = (x, u).
FeatureMap squared_deviation_features(std::vector<int> indices, std::vector<double> refs);

}  // namespace ioc
