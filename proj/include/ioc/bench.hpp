#pragma once

#include "ioc/estimators.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ioc {

/// Estimation-side model uncertainty: `param` is drawn uniformly from
/// [1 - half_width, 1 + half_width] times its true value per repetition.
struct RobustnessBlock {
  std::string param = "car_length";
  double half_width = 0.05;
};

struct ExperimentConfig {
  std::vector<std::string> systems{"msd", "pendulum", "bicycle"};
  std::vector<double> pcts{0.0001, 0.05, 0.10};
  int D = 10;
  int reps = 10;
  std::uint64_t seed = 1;
  std::vector<Method> estimators{Method::KKT, Method::TR, Method::EP};
  double cutoff = 0.005;
  /// Rows with pct at or below this use cutoff 0.
  double noiseless_pct = 1e-4;
  /// Anchored coordinate; the value is taken from the true theta unless given.
  int anchor_index = 0;
  std::optional<double> anchor_value;
  std::optional<RobustnessBlock> robustness;

  void validate() const;
  /// "theta[i] = theta*[i]" or "theta[i] = c".
  [[nodiscard]] std::string anchor_policy() const;
};

std::string config_to_json(const ExperimentConfig& cfg);
/// Fields present in `json_text` replace those of `base`.
ExperimentConfig config_from_json(const std::string& json_text, ExperimentConfig base = {});
/// 16 hex digits of FNV-1a over the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);

struct ResultCell {
  std::string system;
  std::string estimator;
  double pct = 0.0;
  double mean_rmse = 0.0;
  double std_rmse = 0.0;
  int reps_ok = 0;
  std::string note;

  friend bool operator==(const ResultCell&, const ResultCell&) = default;
};

struct ResultTable {
  std::string kind = "benchmark";
  std::string config_hash;
  std::string anchor_policy;
  std::vector<std::uint64_t> seeds;
  std::vector<ResultCell> cells;

  /// Cell lookup; throws std::out_of_range when absent.
  [[nodiscard]] const ResultCell& at(const std::string& system, const std::string& estimator,
                                     double pct) const;

  friend bool operator==(const ResultTable&, const ResultTable&) = default;
};

/// Worker count from IOC_WORKERS, else the hardware concurrency.
int worker_count();

ResultTable run_benchmark(const ExperimentConfig& cfg);
/// Requires cfg.robustness. Demonstrations use the true model; estimators
/// see the perturbed one.
ResultTable run_robustness(const ExperimentConfig& cfg);

struct VerifyCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  [[nodiscard]] bool passed() const;
};

struct VerifyOptions {
  /// Test fixture: flips the sign of the penalty Jacobian in the exact
  /// penalty regression.
  bool corrupt_rho_sign = false;
  int fd_trajectories = 20;
  long psi_draws = 10'000'000;
  std::uint64_t seed = 12345;
};

VerifyReport run_verify(const VerifyOptions& options = {});

enum class ResultFormat { tsv, json };

ResultFormat format_from_string(const std::string& name);
void emit_results(const ResultTable& table, const std::filesystem::path& path, ResultFormat format);
std::string results_to_string(const ResultTable& table, ResultFormat format);
ResultTable parse_results(const std::string& text, ResultFormat format);
ResultTable load_results(const std::filesystem::path& path, ResultFormat format);

}  // namespace ioc
