#pragma once

#include "ioc/core_model.hpp"
#include "ioc/ocp_solver.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ioc {

/// Gaussian measurement noise on t_k = (x_k, u_k) and on x_N.
struct NoiseSpec {
  Matrix sigma_t;   // (n+m) x (n+m) covariance, shared by all stages
  Matrix sigma_xN;  // n x n covariance
  std::uint64_t seed = 0;
  /// Fraction of the mean optimal input used as standard deviation; kept as
  /// metadata only.
  double pct = 0.0;

  /// Throws std::invalid_argument unless both covariances are symmetric PSD
  /// of the right size.
  void validate(int n, int m) const;
};

/// Diagonal covariance with input standard deviation pct * |mean_k u*_k| per
/// channel and exact states.
NoiseSpec make_noise_spec(const OcpSpec& spec, const Vector& u_star, double pct,
                          std::uint64_t seed = 0);

struct DemoTruth {
  Vector theta;
  Trajectory traj;
};

struct DemoSet {
  std::vector<Trajectory> demos;
  std::string spec_name;
  std::optional<NoiseSpec> noise;
  std::optional<DemoTruth> truth;

  [[nodiscard]] int size() const { return static_cast<int>(demos.size()); }
};

/// Solves the forward problem for theta_star, then draws D noisy copies.
DemoSet generate_demoset(const OcpSpec& spec, const Vector& theta_star, const NoiseSpec& noise,
                         int D);

/// Same, reusing an already computed optimum.
DemoSet generate_demoset(const OcpSpec& spec, const OcpSolution& optimum,
                         const Vector& theta_star, const NoiseSpec& noise, int D);

/// Coordinatewise average of the demonstrations.
Trajectory mean_trajectory(const DemoSet& ds);

/// Malformed dataset file. Lines are 1-based; line 1 is the JSON header.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, std::string field, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", field '" + field + "': " + what),
        line_(line),
        field_(std::move(field)) {}
  [[nodiscard]] int line() const { return line_; }
  [[nodiscard]] const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

class UnsupportedVersionError : public ParseError {
 public:
  explicit UnsupportedVersionError(int version)
      : ParseError(1, "version", "unsupported demoset version " + std::to_string(version)),
        version_(version) {}
  [[nodiscard]] int version() const { return version_; }

 private:
  int version_;
};

inline constexpr int kDemoSetVersion = 1;

void save_demoset(const DemoSet& ds, const std::filesystem::path& path);
DemoSet load_demoset(const std::filesystem::path& path);
/// Also checks (n, m, N) against spec; mismatch raises DimensionError.
DemoSet load_demoset(const std::filesystem::path& path, const OcpSpec& spec);

}  // namespace ioc
