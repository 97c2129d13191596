#include <doctest.h>

#include "ioc/bench.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ioc;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.systems = {"msd", "pendulum"};
  cfg.pcts = {0.0, 0.05};
  cfg.reps = 3;
  cfg.D = 4;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class WorkerEnv {
 public:
  explicit WorkerEnv(const char* value) { setenv("IOC_WORKERS", value, 1); }
  ~WorkerEnv() { unsetenv("IOC_WORKERS"); }
};

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("config validation") {
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.reps = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.pcts = {-0.1};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.robustness = RobustnessBlock{"car_length", 1.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.systems = {"cartpole"};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"colour": 1})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json("[1, 2]"), std::invalid_argument);
}

TEST_CASE("config JSON round trip and hash") {
  ExperimentConfig cfg = small_config();
  cfg.robustness = RobustnessBlock{"car_length", 0.05};
  cfg.anchor_value = 2.0;
  const ExperimentConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(config_hash(cfg).size() == 16);
  ExperimentConfig other = cfg;
  other.seed = 2;
  CHECK(config_hash(other) != config_hash(cfg));

  const ExperimentConfig partial = config_from_json(R"({"system": "bicycle", "pct": 0.1, "anchor": "2:3.5"})");
  CHECK(partial.systems == std::vector<std::string>{"bicycle"});
  CHECK(partial.pcts == std::vector<double>{0.1});
  CHECK(partial.anchor_index == 2);
  CHECK(*partial.anchor_value == 3.5);
  CHECK(partial.anchor_policy() == "theta[2] = 3.5");
  CHECK(ExperimentConfig{}.anchor_policy() == "theta[0] = theta*[0]");
}

TEST_CASE("one noiseless repetition has zero spread") {
  ExperimentConfig cfg;
  cfg.pcts = {0.0};
  cfg.reps = 1;
  cfg.D = 2;
  const ResultTable t = run_benchmark(cfg);
  CHECK(t.cells.size() == cfg.systems.size() * cfg.estimators.size());
  for (const ResultCell& c : t.cells) {
    CAPTURE(c.system);
    CHECK(c.std_rmse == 0.0);
    CHECK(c.reps_ok == 1);
    CHECK(c.mean_rmse <= 1e-6);
  }
}

TEST_CASE("tables are deterministic across runs and worker counts") {
  const ExperimentConfig cfg = small_config();
  std::string one, four;
  {
    WorkerEnv env("1");
    CHECK(worker_count() == 1);
    one = results_to_string(run_benchmark(cfg), ResultFormat::tsv);
  }
  {
    WorkerEnv env("4");
    CHECK(worker_count() == 4);
    four = results_to_string(run_benchmark(cfg), ResultFormat::tsv);
  }
  CHECK(one == four);
  CHECK(one == results_to_string(run_benchmark(cfg), ResultFormat::tsv));
}

TEST_CASE("cell layout and metadata") {
  const ExperimentConfig cfg = small_config();
  const ResultTable t = run_benchmark(cfg);
  CHECK(t.cells.size() == 2 * 3 * 2);
  CHECK(t.kind == "benchmark");
  CHECK(t.config_hash == config_hash(cfg));
  CHECK(t.seeds == std::vector<std::uint64_t>{1, 2, 3});
  for (const ResultCell& c : t.cells) {
    CHECK(c.std_rmse >= 0.0);
    CHECK(c.reps_ok == 3);
  }
  CHECK(t.at("pendulum", "TR", 0.05).pct == 0.05);
  CHECK_THROWS_AS((void)t.at("bicycle", "EP", 0.05), std::out_of_range);
}

TEST_CASE("zero half-width robustness equals the benchmark") {
  ExperimentConfig cfg = small_config();
  cfg.systems = {"bicycle"};
  const ResultTable bench = run_benchmark(cfg);
  cfg.robustness = RobustnessBlock{"car_length", 0.0};
  const ResultTable robust = run_robustness(cfg);
  REQUIRE(bench.cells.size() == robust.cells.size());
  for (std::size_t i = 0; i < bench.cells.size(); ++i) {
    CHECK(bench.cells[i].mean_rmse == robust.cells[i].mean_rmse);
    CHECK(bench.cells[i].std_rmse == robust.cells[i].std_rmse);
  }
  CHECK(robust.kind == "robustness");
  cfg.robustness.reset();
  CHECK_THROWS_AS(run_robustness(cfg), std::invalid_argument);
}

TEST_CASE("estimator failures are recorded per cell") {
  ExperimentConfig cfg;
  cfg.systems = {"msd"};
  cfg.pcts = {0.05};
  cfg.reps = 2;
  cfg.D = 2;
  cfg.anchor_index = 4;  // msd has three weights
  const ResultTable t = run_benchmark(cfg);
  for (const ResultCell& c : t.cells) {
    CHECK(std::isnan(c.mean_rmse));
    CHECK(c.reps_ok == 0);
    CHECK(c.note.find("anchor index") != std::string::npos);
  }
}

TEST_CASE("result files round trip") {
  ResultTable t = run_benchmark(small_config());
  t.cells[0].note = "rep 0: tab\there; newline\nthere";
  t.cells[1].mean_rmse = std::nan("");
  t.cells[1].std_rmse = std::nan("");
  for (ResultFormat f : {ResultFormat::tsv, ResultFormat::json}) {
    const ResultTable back = parse_results(results_to_string(t, f), f);
    CHECK(back.kind == t.kind);
    CHECK(back.config_hash == t.config_hash);
    CHECK(back.anchor_policy == t.anchor_policy);
    CHECK(back.seeds == t.seeds);
    REQUIRE(back.cells.size() == t.cells.size());
    CHECK(std::isnan(back.cells[1].mean_rmse));
    for (std::size_t i = 0; i < t.cells.size(); ++i) {
      if (i == 1) continue;
      CHECK(back.cells[i] == t.cells[i]);
    }
  }
  const auto path = std::filesystem::temp_directory_path() / "ioc_test_results.json";
  emit_results(t, path, ResultFormat::json);
  CHECK(slurp(path).find("\"anchor_policy\"") != std::string::npos);
  CHECK(load_results(path, ResultFormat::json).cells.size() == t.cells.size());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(format_from_string("xml"), std::invalid_argument);
}

TEST_CASE("empty table is header only") {
  ResultTable t;
  t.config_hash = "0000000000000000";
  const std::string text = results_to_string(t, ResultFormat::tsv);
  CHECK(text.back() == '\n');
  CHECK(text.find("system\testimator\tpct\tmean_rmse\tstd_rmse\treps_ok\tnote\n") != std::string::npos);
  CHECK(text.substr(text.size() - 6) == "\tnote\n");
  CHECK(parse_results(text, ResultFormat::tsv) == t);
}

TEST_CASE("verification suite") {
  VerifyOptions o;
  o.fd_trajectories = 3;
  const VerifyReport good = run_verify(o);
  for (const VerifyCheck& c : good.checks) {
    CAPTURE(c.name);
    CAPTURE(c.value);
    CHECK(c.passed);
  }
  o.corrupt_rho_sign = true;
  const VerifyReport bad = run_verify(o);
  CHECK_FALSE(bad.passed());
  int failed_equivalence = 0;
  for (const VerifyCheck& c : bad.checks) {
    if (!c.passed) {
      const bool equivalence = c.name.find("theta agree") != std::string::npos ||
                               c.name.find("retained penalty weights") != std::string::npos;
      CHECK(equivalence);
      ++failed_equivalence;
    }
  }
  CHECK(failed_equivalence >= 1);
}

}  // TEST_SUITE
