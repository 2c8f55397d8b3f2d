#pragma once

#include <string>
#include <vector>

#include "vstar/bandit.hpp"
#include "vstar/gp_upper.hpp"
#include "vstar/model_selection.hpp"
#include "vstar/moment.hpp"
#include "vstar/treatment.hpp"

namespace vstar {

enum class Scenario {
  Fig1Dense,
  Fig1Sparse,
  Fig3Power,
  ModelSelect,
  UpperBoundRate,
  Custom,
};

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

enum class MomentOracleKind { Analytic, Pool };

/// Everything a sweep needs: instance recipe, estimator settings, grid,
/// seeding and output routing. Defaults are scenario-specific.
struct ExperimentConfig {
  Scenario scenario = Scenario::Fig1Dense;

  FeatureLawKind law = FeatureLawKind::RademacherIID;
  int d = 300;
  int K = 2;
  LawParams params;

  std::vector<std::string> estimators;  // row producers, in output order

  MomentConfig moment{2, 1, 0.05, 20000};
  MomentOracleKind moment_oracle = MomentOracleKind::Analytic;
  int moment_pool_size = 4000;

  int poly_degree = 2;
  int poly_points = 2000;
  double poly_lo = -2.0;
  double poly_hi = 2.0;

  UpperConfig upper;

  SelectorConfig selector;
  int nested_d1 = 5;
  double nested_head_norm = 0.5;      // realizable-variant signal size
  double nested_tail_norm = 0.5;      // class-gap size ||theta_diff||
  double nested_head_norm_alt = 0.1;  // head size in the non-realizable variant
  bool selector_realizable = true;    // single-run CLI variant

  int treatment_p = 2000;
  int treatment_a1 = 3;
  int treatment_a2 = 2;
  double c_test = 0.2;
  double c_lr = 0.33;
  int reps = 100;
  std::string effect_mode = "both";  // "null", "effect" or "both"

  std::vector<int> n_grid;
  int trials = 10;
  std::uint64_t master_seed = 7;
  std::string output_dir;
  int threads = 0;  // 0: VSTAR_THREADS env, then 1
  std::string format = "csv";

  int oracle_pool_baselines = 4000;
  int oracle_pool_moment = 1000;
  double ridge_lambda = 1.0;
  double cell_timeout_sec = 600.0;
};

ExperimentConfig default_config(Scenario scenario);

/// Parses and validates a config JSON document. Unknown keys and malformed
/// values raise ConfigError naming the offending field path.
ExperimentConfig config_from_json_text(const std::string& text);

struct ResultRow {
  std::string scenario;
  int trial = 0;
  int n = 0;
  std::string estimator;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double abs_error = std::numeric_limits<double>::quiet_NaN();
  double runtime_ms = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
};

struct SummaryRow {
  std::string scenario;
  int n = 0;
  std::string estimator;
  double mean_abs_error = 0.0;
  double stderr = 0.0;
  int trials = 0;
};

struct ScenarioResult {
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
  std::vector<PowerRow> power;   // Fig3Power
  std::vector<RunTrace> traces;  // ModelSelect
  std::vector<std::string> trace_labels;
};

/// Executes every (trial, n) cell of the configured scenario with derived
/// substream seeds. Cells run on a worker pool; outputs are written in a
/// fixed order so results are byte-identical across thread counts.
ScenarioResult run_scenario(const ExperimentConfig& config);

void write_rows_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);

/// Writes rows/summary/power/traces under config.output_dir.
void write_outputs(const ScenarioResult& result, const ExperimentConfig& config);

/// Thread count resolution: explicit > VSTAR_THREADS > 1.
int resolve_threads(int requested);

}  // namespace vstar
