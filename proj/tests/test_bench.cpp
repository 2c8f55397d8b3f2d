#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "vstar/bench.hpp"
#include "vstar/io.hpp"

using namespace vstar;

namespace {

ExperimentConfig tiny_sweep() {
  ExperimentConfig cfg = default_config(Scenario::Fig1Dense);
  cfg.d = 20;
  cfg.trials = 2;
  cfg.n_grid = {10, 20};
  cfg.oracle_pool_baselines = 300;
  cfg.oracle_pool_moment = 200;
  cfg.poly_points = 300;
  cfg.threads = 1;
  return cfg;
}

std::vector<ResultRow> strip_runtime(std::vector<ResultRow> rows) {
  for (auto& r : rows) r.runtime_ms = 0.0;
  return rows;
}

bool rows_equal(const std::vector<ResultRow>& a,
                const std::vector<ResultRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    const bool est_equal =
        (std::isnan(x.estimate) && std::isnan(y.estimate)) ||
        x.estimate == y.estimate;
    if (x.scenario != y.scenario || x.trial != y.trial || x.n != y.n ||
        x.estimator != y.estimator || !est_equal || x.seed != y.seed)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("scenario names round-trip") {
  for (Scenario s : {Scenario::Fig1Dense, Scenario::Fig1Sparse,
                     Scenario::Fig3Power, Scenario::ModelSelect,
                     Scenario::UpperBoundRate, Scenario::Custom})
    CHECK(scenario_from_name(scenario_name(s)) == s);
  CHECK_THROWS_AS(scenario_from_name("fig9"), ConfigError);
}

TEST_CASE("config parsing: defaults, overrides, strictness") {
  const auto cfg = config_from_json_text(R"({
    "scenario": "fig1",
    "master_seed": 11,
    "trials": 3,
    "n_grid": [5, 10],
    "instance": {"kind": "rademacher", "d": 40, "K": 2},
    "moment": {"degree": 2, "q": 1, "oracle": "analytic"},
    "poly": {"n_points": 500}
  })");
  CHECK(cfg.master_seed == 11);
  CHECK(cfg.trials == 3);
  CHECK(cfg.d == 40);
  CHECK(cfg.poly_points == 500);
  CHECK(cfg.moment.q == 1);

  CHECK_THROWS_WITH_AS(config_from_json_text(R"({"scenario": "fig1", "x": 1})"),
                       doctest::Contains("unknown key 'x'"), ConfigError);
  CHECK_THROWS_WITH_AS(
      config_from_json_text(R"({"instance": {"kind": "rademacher", "K": 2}})"),
      doctest::Contains("instance.d"), ConfigError);
  CHECK_THROWS_WITH_AS(
      config_from_json_text(R"({"instance": {"kind": "hyperbolic", "d": 2, "K": 2}})"),
      doctest::Contains("instance.kind"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text("not json"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"format": "yaml"})"), ConfigError);
  CHECK_THROWS_AS(
      config_from_json_text(R"({"estimators": ["moment", "psychic"]})"),
      ConfigError);
}

TEST_CASE("sweep validation rejects bad grids") {
  ExperimentConfig cfg = tiny_sweep();
  cfg.n_grid = {};
  CHECK_THROWS_AS(run_scenario(cfg), ConfigError);
  cfg.n_grid = {10, 10};
  CHECK_THROWS_AS(run_scenario(cfg), ConfigError);
  cfg.n_grid = {10};
  cfg.trials = 0;
  CHECK_THROWS_AS(run_scenario(cfg), ConfigError);
}

TEST_CASE("tiny sweep produces a complete, consistent result set") {
  const auto cfg = tiny_sweep();
  const auto result = run_scenario(cfg);
  CHECK(result.rows.size() == 2 * 2 * cfg.estimators.size());

  // Summary stderr equals sample std over sqrt(trials), recomputed from rows.
  for (const auto& s : result.summary) {
    std::vector<double> errs;
    for (const auto& r : result.rows)
      if (r.estimator == s.estimator && r.n == s.n && !r.failed)
        errs.push_back(r.abs_error);
    REQUIRE(int(errs.size()) == s.trials);
    double mean = 0;
    for (double e : errs) mean += e / errs.size();
    CHECK(s.mean_abs_error == doctest::Approx(mean));
    if (errs.size() > 1) {
      double var = 0;
      for (double e : errs) var += (e - mean) * (e - mean) / (errs.size() - 1);
      CHECK(s.stderr == doctest::Approx(std::sqrt(var / errs.size())));
    }
  }

  // One row per (trial, n, estimator) in deterministic order.
  const auto again = run_scenario(cfg);
  CHECK(rows_equal(strip_runtime(result.rows), strip_runtime(again.rows)));
}

TEST_CASE("thread count does not change results") {
  ExperimentConfig cfg = tiny_sweep();
  cfg.threads = 1;
  const auto serial = run_scenario(cfg);
  cfg.threads = 4;
  const auto parallel = run_scenario(cfg);
  CHECK(rows_equal(strip_runtime(serial.rows), strip_runtime(parallel.rows)));
  REQUIRE(serial.summary.size() == parallel.summary.size());
  for (std::size_t i = 0; i < serial.summary.size(); ++i)
    CHECK(serial.summary[i].mean_abs_error ==
          parallel.summary[i].mean_abs_error);
}

TEST_CASE("outputs land in the requested directory") {
  namespace fs = std::filesystem;
  ExperimentConfig cfg = tiny_sweep();
  cfg.output_dir = (fs::temp_directory_path() / "vstar-bench-test").string();
  fs::remove_all(cfg.output_dir);
  const auto result = run_scenario(cfg);
  write_outputs(result, cfg);
  CHECK(fs::exists(fs::path(cfg.output_dir) / "results.csv"));
  CHECK(fs::exists(fs::path(cfg.output_dir) / "summary.csv"));

  cfg.format = "json";
  write_outputs(result, cfg);
  CHECK(fs::exists(fs::path(cfg.output_dir) / "results.json"));
  fs::remove_all(cfg.output_dir);
}

TEST_CASE("csv schemas match the documented columns") {
  std::ostringstream rows;
  write_rows_csv(rows, {});
  CHECK(rows.str() ==
        "scenario,trial,n,estimator_name,estimate,abs_error,runtime_ms,seed\n");
  std::ostringstream summary;
  write_summary_csv(summary, {});
  CHECK(summary.str() ==
        "scenario,n,estimator_name,mean_abs_error,stderr,trials\n");
  std::ostringstream power;
  write_power_csv(power, {});
  CHECK(power.str() ==
        "n,effect_flag,psi_rate,psi_stderr,lr_rate,lr_stderr,reps\n");
}

TEST_CASE("double formatting round-trips and encodes missing values") {
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "NA");
  for (double v : {0.1, -3.25, 1.0 / 3.0, 1e-30, 123456789.123}) {
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
}

TEST_CASE("dataset csv round-trips") {
  LawParams p;
  const auto inst = make_instance(FeatureLawKind::RademacherIID, 3, 2, p, 77);
  RngStream rng(substream(77, "data"));
  const Dataset data = collect_uniform(inst, 5, rng);
  std::stringstream ss;
  write_dataset_csv(ss, data, 0);
  const Dataset parsed = read_dataset_csv(ss, 2, 3);
  REQUIRE(parsed.size() == data.size());
  for (int i = 0; i < data.size(); ++i) {
    CHECK(parsed.records[i].action == data.records[i].action);
    CHECK(parsed.records[i].reward == data.records[i].reward);
    CHECK(parsed.records[i].features == data.records[i].features);
  }
}

TEST_CASE("polynomial and fitted-process serialization round-trip") {
  const auto p = binary_poly(3, 0.5);
  const auto q = polynomial_from_json(polynomial_to_json(p));
  CHECK(q.degree == p.degree);
  REQUIRE(q.terms.size() == p.terms.size());
  for (const auto& [idx, c] : p.terms) CHECK(q.terms.at(idx) == c);

  FittedProcess fp;
  fp.beta_hat = Matrix::Constant(2, 2, 0.25);
  fp.lambda_tilde = Matrix::Identity(2, 2);
  fp.residual = 1e-3;
  fp.u_hat = 0.5;
  fp.u_stderr = 0.01;
  fp.mc_samples = 1000;
  const std::string json = fitted_process_to_json(fp);
  CHECK(json.find("\"u_hat\": 0.5") != std::string::npos);
  CHECK(json.find("\"n_mc\": 1000") != std::string::npos);
}

TEST_CASE("moment table and run trace writers emit their schemas") {
  MomentTable table;
  table.alphas = {MultiIndex{{1, 1}}};
  table.chunk_values = {{0.5, 0.7}};
  table.medians = {0.6};
  std::ostringstream os;
  write_moment_table_csv(os, table);
  CHECK(os.str() ==
        "alpha,chunk_id,s_hat_chunk,s_hat_median\n"
        "1-1,0,0.5,0.6\n1-1,1,0.7,0.6\n");

  RunTrace trace;
  RunTraceRow row;
  row.t = 1;
  row.explored = true;
  row.action = 2;
  row.reward = 0.5;
  row.regret_cum = 0.25;
  row.alpha_t = 1.5;
  row.active_class = 1;
  trace.rows.push_back(row);
  std::ostringstream ts;
  write_run_trace_csv(ts, trace);
  CHECK(ts.str() ==
        "t,explored,action,reward,regret_cum,u_hat,alpha_t,active_class\n"
        "1,1,2,0.5,0.25,NA,1.5,1\n");
}

TEST_CASE("default fig3 configuration carries the reference recipe") {
  const auto cfg = default_config(Scenario::Fig3Power);
  CHECK(cfg.d == 600);
  CHECK(cfg.treatment_p == 2000);
  CHECK(cfg.n_grid == std::vector<int>{50, 75, 100, 150, 200, 250, 300});
  CHECK(cfg.reps == 100);
  CHECK(cfg.c_test == 0.2);
  CHECK(cfg.c_lr == 0.33);
}
