#include "vstar/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>

#include "json.hpp"
#include "vstar/io.hpp"
#include "vstar/parallel.hpp"
#include "vstar/polynomial.hpp"

namespace vstar {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

}  // namespace

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::Fig1Dense:
      return "fig1";
    case Scenario::Fig1Sparse:
      return "fig1-sparse";
    case Scenario::Fig3Power:
      return "fig3-power";
    case Scenario::ModelSelect:
      return "model-select";
    case Scenario::UpperBoundRate:
      return "upper-rate";
    case Scenario::Custom:
      return "custom";
  }
  return "custom";
}

Scenario scenario_from_name(const std::string& name) {
  if (name == "fig1") return Scenario::Fig1Dense;
  if (name == "fig1-sparse") return Scenario::Fig1Sparse;
  if (name == "fig3-power") return Scenario::Fig3Power;
  if (name == "model-select") return Scenario::ModelSelect;
  if (name == "upper-rate") return Scenario::UpperBoundRate;
  if (name == "custom") return Scenario::Custom;
  throw ConfigError("scenario: unknown name '" + name + "'");
}

ExperimentConfig default_config(Scenario scenario) {
  ExperimentConfig cfg;
  cfg.scenario = scenario;
  switch (scenario) {
    case Scenario::Fig1Dense:
    case Scenario::Custom:
      cfg.law = FeatureLawKind::RademacherIID;
      cfg.d = 300;
      cfg.K = 2;
      cfg.n_grid = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
      cfg.trials = 10;
      cfg.estimators = {"moment", "lr", "ridge", "approx"};
      cfg.moment = {2, 1, 0.05, 20000};
      cfg.moment_oracle = MomentOracleKind::Analytic;
      break;
    case Scenario::Fig1Sparse:
      cfg.law = FeatureLawKind::SparseBinary;
      cfg.d = 300;
      cfg.K = 2;
      cfg.params.i_star = 0;
      cfg.params.omega = 10.0;
      cfg.n_grid = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
      cfg.trials = 10;
      cfg.estimators = {"moment", "lr", "ridge", "approx"};
      cfg.moment = {2, 1, 0.05, 20000};
      cfg.moment_oracle = MomentOracleKind::Pool;
      cfg.poly_lo = -12.0;
      cfg.poly_hi = 12.0;
      break;
    case Scenario::Fig3Power:
      cfg.law = FeatureLawKind::TreatmentSplit;
      cfg.d = 600;
      cfg.K = 4;
      cfg.params.a1_size = 3;
      cfg.params.a2_size = 2;
      cfg.n_grid = {50, 75, 100, 150, 200, 250, 300};
      cfg.trials = 1;
      cfg.reps = 100;
      break;
    case Scenario::ModelSelect:
      cfg.law = FeatureLawKind::NestedPair;
      cfg.d = 50;
      cfg.K = 2;
      cfg.nested_d1 = 5;
      cfg.n_grid = {3000};
      cfg.trials = 20;
      cfg.selector.T = 3000;
      cfg.estimators = {"selector"};
      break;
    case Scenario::UpperBoundRate: {
      cfg.law = FeatureLawKind::GaussianIdentity;
      cfg.d = 50;
      cfg.K = 2;
      Vector e1 = Vector::Zero(50);
      e1[0] = 1.0;
      cfg.params.theta = e1;
      cfg.n_grid = {500, 1000, 2000, 4000, 8000};
      cfg.trials = 20;
      cfg.estimators = {"upper"};
      break;
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

using Json = nlohmann::json;

void check_keys(const Json& j, const std::vector<std::string>& allowed,
                const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("unknown key '" + path + it.key() + "'");
  }
}

template <typename T>
T get_field(const Json& j, const std::string& key, const std::string& path,
            T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("bad value for '" + path + key + "'");
  }
}

template <typename T>
T require_field(const Json& j, const std::string& key,
                const std::string& path) {
  if (!j.contains(key))
    throw ConfigError("missing required field '" + path + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("bad value for '" + path + key + "'");
  }
}

FeatureLawKind law_from_name(const std::string& name) {
  if (name == "rademacher") return FeatureLawKind::RademacherIID;
  if (name == "gaussian") return FeatureLawKind::GaussianIdentity;
  if (name == "sparse-binary") return FeatureLawKind::SparseBinary;
  if (name == "truncation") return FeatureLawKind::TruncationCoupling;
  if (name == "nested") return FeatureLawKind::NestedPair;
  if (name == "treatment") return FeatureLawKind::TreatmentSplit;
  throw ConfigError("instance.kind: unknown law '" + name + "'");
}

void parse_instance(const Json& j, ExperimentConfig& cfg) {
  check_keys(j,
             {"kind", "d", "K", "i_star", "omega", "c_trunc", "d1",
              "head_norm", "tail_norm", "a1_size", "a2_size", "no_effect",
              "a2_rademacher_fill", "noise", "noise_sigma", "theta"},
             "instance.");
  cfg.law = law_from_name(require_field<std::string>(j, "kind", "instance."));
  cfg.d = require_field<int>(j, "d", "instance.");
  cfg.K = require_field<int>(j, "K", "instance.");
  cfg.params.i_star = get_field<int>(j, "i_star", "instance.", cfg.params.i_star);
  cfg.params.omega = get_field<double>(j, "omega", "instance.", cfg.params.omega);
  cfg.params.c_trunc =
      get_field<double>(j, "c_trunc", "instance.", cfg.params.c_trunc);
  cfg.params.d1 = get_field<int>(j, "d1", "instance.", cfg.params.d1);
  cfg.params.head_norm =
      get_field<double>(j, "head_norm", "instance.", cfg.params.head_norm);
  cfg.params.tail_norm =
      get_field<double>(j, "tail_norm", "instance.", cfg.params.tail_norm);
  cfg.params.a1_size =
      get_field<int>(j, "a1_size", "instance.", cfg.params.a1_size);
  cfg.params.a2_size =
      get_field<int>(j, "a2_size", "instance.", cfg.params.a2_size);
  cfg.params.no_effect =
      get_field<bool>(j, "no_effect", "instance.", cfg.params.no_effect);
  cfg.params.a2_rademacher_fill = get_field<bool>(
      j, "a2_rademacher_fill", "instance.", cfg.params.a2_rademacher_fill);
  if (j.contains("noise")) {
    const auto noise = j.at("noise").get<std::string>();
    if (noise == "uniform-half")
      cfg.params.noise_law = NoiseLaw::UniformHalf;
    else if (noise == "gaussian")
      cfg.params.noise_law = NoiseLaw::Gaussian;
    else if (noise == "none")
      cfg.params.noise_law = NoiseLaw::None;
    else
      throw ConfigError("instance.noise: unknown law '" + noise + "'");
  }
  cfg.params.noise_sigma =
      get_field<double>(j, "noise_sigma", "instance.", cfg.params.noise_sigma);
  if (j.contains("theta")) {
    const auto values = j.at("theta").get<std::vector<double>>();
    Vector theta(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) theta[i] = values[i];
    cfg.params.theta = theta;
  }
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"scenario", "master_seed", "trials", "n_grid", "threads",
              "output_dir", "format", "instance", "estimators", "moment",
              "poly", "upper", "selector", "treatment", "oracle",
              "ridge_lambda", "cell_timeout_sec"},
             "");
  const Scenario scenario =
      scenario_from_name(get_field<std::string>(j, "scenario", "", "custom"));
  ExperimentConfig cfg = default_config(scenario);

  cfg.master_seed = get_field<std::uint64_t>(j, "master_seed", "", cfg.master_seed);
  cfg.trials = get_field<int>(j, "trials", "", cfg.trials);
  cfg.n_grid = get_field<std::vector<int>>(j, "n_grid", "", cfg.n_grid);
  cfg.threads = get_field<int>(j, "threads", "", cfg.threads);
  cfg.output_dir = get_field<std::string>(j, "output_dir", "", cfg.output_dir);
  cfg.format = get_field<std::string>(j, "format", "", cfg.format);
  if (cfg.format != "csv" && cfg.format != "json")
    throw ConfigError("format: must be 'csv' or 'json'");
  cfg.ridge_lambda = get_field<double>(j, "ridge_lambda", "", cfg.ridge_lambda);
  cfg.cell_timeout_sec =
      get_field<double>(j, "cell_timeout_sec", "", cfg.cell_timeout_sec);
  if (j.contains("estimators")) {
    cfg.estimators = j.at("estimators").get<std::vector<std::string>>();
    static const std::vector<std::string> known = {
        "moment", "lr", "ridge", "approx", "upper", "selector"};
    for (const auto& e : cfg.estimators)
      if (std::find(known.begin(), known.end(), e) == known.end())
        throw ConfigError("estimators: unknown estimator '" + e + "'");
  }

  if (j.contains("instance")) parse_instance(j.at("instance"), cfg);

  if (j.contains("moment")) {
    const Json& m = j.at("moment");
    check_keys(m, {"degree", "q", "delta", "combo_cap", "oracle", "pool_size"},
               "moment.");
    cfg.moment.degree = get_field<int>(m, "degree", "moment.", cfg.moment.degree);
    cfg.moment.q = get_field<int>(m, "q", "moment.", cfg.moment.q);
    cfg.moment.delta = get_field<double>(m, "delta", "moment.", cfg.moment.delta);
    cfg.moment.combo_cap =
        get_field<long>(m, "combo_cap", "moment.", cfg.moment.combo_cap);
    if (m.contains("oracle")) {
      const auto name = m.at("oracle").get<std::string>();
      if (name == "analytic")
        cfg.moment_oracle = MomentOracleKind::Analytic;
      else if (name == "pool")
        cfg.moment_oracle = MomentOracleKind::Pool;
      else
        throw ConfigError("moment.oracle: unknown oracle '" + name + "'");
    }
    cfg.moment_pool_size =
        get_field<int>(m, "pool_size", "moment.", cfg.moment_pool_size);
  }

  if (j.contains("poly")) {
    const Json& p = j.at("poly");
    check_keys(p, {"degree", "n_points", "lo", "hi"}, "poly.");
    cfg.poly_degree = get_field<int>(p, "degree", "poly.", cfg.poly_degree);
    cfg.poly_points = get_field<int>(p, "n_points", "poly.", cfg.poly_points);
    cfg.poly_lo = get_field<double>(p, "lo", "poly.", cfg.poly_lo);
    cfg.poly_hi = get_field<double>(p, "hi", "poly.", cfg.poly_hi);
  }

  if (j.contains("upper")) {
    const Json& u = j.at("upper");
    check_keys(u, {"n_mc", "tol", "max_iter", "closed_form_k2"}, "upper.");
    cfg.upper.n_mc = get_field<int>(u, "n_mc", "upper.", cfg.upper.n_mc);
    cfg.upper.tol = get_field<double>(u, "tol", "upper.", cfg.upper.tol);
    cfg.upper.max_iter =
        get_field<int>(u, "max_iter", "upper.", cfg.upper.max_iter);
    cfg.upper.closed_form_k2 = get_field<bool>(u, "closed_form_k2", "upper.",
                                               cfg.upper.closed_form_k2);
  }

  if (j.contains("selector")) {
    const Json& s = j.at("selector");
    check_keys(s,
               {"T", "delta", "C0", "C1", "C2", "known_cov", "policy_count",
                "gamma_scale", "n_mc", "u_stride", "tau", "rho",
                "closed_form_k2", "v_star_mc", "d1", "head_norm", "tail_norm",
                "head_norm_alt", "realizable"},
               "selector.");
    cfg.selector.T = get_field<int>(s, "T", "selector.", cfg.selector.T);
    cfg.selector.delta =
        get_field<double>(s, "delta", "selector.", cfg.selector.delta);
    cfg.selector.C0 = get_field<double>(s, "C0", "selector.", cfg.selector.C0);
    cfg.selector.C1 = get_field<double>(s, "C1", "selector.", cfg.selector.C1);
    cfg.selector.C2 = get_field<double>(s, "C2", "selector.", cfg.selector.C2);
    cfg.selector.known_cov =
        get_field<bool>(s, "known_cov", "selector.", cfg.selector.known_cov);
    cfg.selector.exp4_policy_count = get_field<int>(
        s, "policy_count", "selector.", cfg.selector.exp4_policy_count);
    cfg.selector.exp4_gamma_scale = get_field<double>(
        s, "gamma_scale", "selector.", cfg.selector.exp4_gamma_scale);
    cfg.selector.n_mc = get_field<int>(s, "n_mc", "selector.", cfg.selector.n_mc);
    cfg.selector.u_stride =
        get_field<int>(s, "u_stride", "selector.", cfg.selector.u_stride);
    cfg.selector.tau = get_field<double>(s, "tau", "selector.", cfg.selector.tau);
    cfg.selector.rho = get_field<double>(s, "rho", "selector.", cfg.selector.rho);
    cfg.selector.closed_form_k2 = get_field<bool>(
        s, "closed_form_k2", "selector.", cfg.selector.closed_form_k2);
    cfg.selector.v_star_mc =
        get_field<int>(s, "v_star_mc", "selector.", cfg.selector.v_star_mc);
    cfg.nested_d1 = get_field<int>(s, "d1", "selector.", cfg.nested_d1);
    cfg.nested_head_norm =
        get_field<double>(s, "head_norm", "selector.", cfg.nested_head_norm);
    cfg.nested_tail_norm =
        get_field<double>(s, "tail_norm", "selector.", cfg.nested_tail_norm);
    cfg.nested_head_norm_alt = get_field<double>(s, "head_norm_alt",
                                                 "selector.", cfg.nested_head_norm_alt);
    cfg.selector_realizable =
        get_field<bool>(s, "realizable", "selector.", cfg.selector_realizable);
  }

  if (j.contains("treatment")) {
    const Json& t = j.at("treatment");
    check_keys(t, {"p", "c_test", "c_lr", "reps", "effect", "a1_size", "a2_size"},
               "treatment.");
    cfg.treatment_p = get_field<int>(t, "p", "treatment.", cfg.treatment_p);
    cfg.c_test = get_field<double>(t, "c_test", "treatment.", cfg.c_test);
    cfg.c_lr = get_field<double>(t, "c_lr", "treatment.", cfg.c_lr);
    cfg.reps = get_field<int>(t, "reps", "treatment.", cfg.reps);
    cfg.effect_mode =
        get_field<std::string>(t, "effect", "treatment.", cfg.effect_mode);
    cfg.treatment_a1 = get_field<int>(t, "a1_size", "treatment.", cfg.treatment_a1);
    cfg.treatment_a2 = get_field<int>(t, "a2_size", "treatment.", cfg.treatment_a2);
    if (cfg.effect_mode != "null" && cfg.effect_mode != "effect" &&
        cfg.effect_mode != "both")
      throw ConfigError("treatment.effect: must be 'null', 'effect' or 'both'");
  }

  if (j.contains("oracle")) {
    const Json& o = j.at("oracle");
    check_keys(o, {"baseline_pool", "moment_pool"}, "oracle.");
    cfg.oracle_pool_baselines =
        get_field<int>(o, "baseline_pool", "oracle.", cfg.oracle_pool_baselines);
    cfg.oracle_pool_moment =
        get_field<int>(o, "moment_pool", "oracle.", cfg.oracle_pool_moment);
  }

  return cfg;
}

// ---------------------------------------------------------------------------
// Sweep execution

namespace {

void validate_sweep(const ExperimentConfig& cfg) {
  if (cfg.trials < 1) throw ConfigError("trials: must be >= 1");
  if (cfg.n_grid.empty()) throw ConfigError("n_grid: must be nonempty");
  for (std::size_t i = 1; i < cfg.n_grid.size(); ++i)
    if (cfg.n_grid[i] <= cfg.n_grid[i - 1])
      throw ConfigError("n_grid: must be strictly increasing");
  static const std::vector<std::string> known = {
      "moment", "lr", "ridge", "approx", "upper", "selector"};
  for (const auto& e : cfg.estimators)
    if (std::find(known.begin(), known.end(), e) == known.end())
      throw ConfigError("estimators: unknown estimator '" + e + "'");
}

struct TrialState {
  BanditInstance instance;
  std::vector<Matrix> eval_pool;
  double v_base = 0.0;    // reference value on the evaluation pool
  double v_moment = 0.0;  // reference value on the moment-sized pool
  std::shared_ptr<const MomentOracle> oracle;
  CovarianceSet covs;
  bool identity_cov = false;
};

double pool_value(const std::vector<Matrix>& pool, const Vector& theta) {
  double sum = 0.0;
  for (const Matrix& ctx : pool) sum += (ctx * theta).maxCoeff();
  return sum / double(pool.size());
}

Dataset mark_whitened(Dataset data) {
  data.whitened = true;
  return data;
}

ScenarioResult run_error_sweep(const ExperimentConfig& cfg) {
  validate_sweep(cfg);
  const int threads = resolve_threads(cfg.threads);
  const std::string sname = scenario_name(cfg.scenario);

  const bool needs_poly =
      std::find(cfg.estimators.begin(), cfg.estimators.end(), "moment") !=
          cfg.estimators.end() ||
      std::find(cfg.estimators.begin(), cfg.estimators.end(), "approx") !=
          cfg.estimators.end();
  Polynomial poly;
  if (needs_poly)
    poly = fit_l1(cfg.K, cfg.poly_degree, cfg.poly_points, cfg.poly_lo,
                  cfg.poly_hi, derive_key(cfg.master_seed, "poly"));

  // Per-trial shared state (instance, pools, reference values, oracle).
  std::vector<TrialState> trials(cfg.trials);
  parallel_for(cfg.trials, threads, [&](int trial) {
    TrialState& ts = trials[trial];
    ts.instance = make_instance(cfg.law, cfg.d, cfg.K, cfg.params,
                                derive_key(cfg.master_seed, "instance", trial));
    RngStream eval_rng = substream(cfg.master_seed, "eval", trial);
    ts.eval_pool =
        collect_unlabeled(ts.instance, cfg.oracle_pool_baselines, eval_rng);
    ts.v_base = pool_value(ts.eval_pool, ts.instance.theta);
    RngStream mom_rng = substream(cfg.master_seed, "oracle-moment", trial);
    ts.v_moment = pool_value(
        collect_unlabeled(ts.instance, cfg.oracle_pool_moment, mom_rng),
        ts.instance.theta);
    ts.covs = true_covariances(ts.instance);
    ts.identity_cov =
        ts.covs.sigma_avg.isApprox(Matrix::Identity(cfg.d, cfg.d));
    if (cfg.moment_oracle == MomentOracleKind::Analytic) {
      ts.oracle = std::make_shared<AnalyticRademacherOracle>(cfg.d);
    } else {
      RngStream pool_rng = substream(cfg.master_seed, "moment-pool", trial);
      ts.oracle = std::make_shared<UnlabeledPoolOracle>(
          collect_unlabeled(ts.instance, cfg.moment_pool_size, pool_rng));
    }
  });

  const int grid = static_cast<int>(cfg.n_grid.size());
  const int cells = cfg.trials * grid;
  std::vector<std::vector<ResultRow>> cell_rows(cells);

  parallel_for(cells, threads, [&](int cell) {
    const int trial = cell / grid;
    const int n = cfg.n_grid[cell % grid];
    const TrialState& ts = trials[trial];
    const std::uint64_t cell_seed =
        derive_key(cfg.master_seed, "data", std::uint64_t(cell));
    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(
                           std::chrono::duration<double>(cfg.cell_timeout_sec));

    RngStream data_rng(cell_seed);
    const Dataset data = collect_uniform(ts.instance, n, data_rng);

    for (const std::string& est : cfg.estimators) {
      ResultRow row;
      row.scenario = sname;
      row.trial = trial;
      row.n = n;
      row.estimator = est;
      row.seed = cell_seed;
      const auto start = Clock::now();
      try {
        if (Clock::now() > deadline)
          throw CellTimeoutError("cell exceeded its time budget");
        if (est == "moment") {
          const Dataset wdata = ts.identity_cov
                                    ? mark_whitened(data)
                                    : whiten(data, ts.covs.sigma_avg);
          RngStream mom_rng = substream(cfg.master_seed, "moment", cell);
          row.estimate =
              estimate_v_star_moment(wdata, poly, cfg.moment, *ts.oracle,
                                     mom_rng)
                  .first;
          row.abs_error = std::abs(row.estimate - ts.v_moment);
        } else if (est == "lr") {
          row.estimate =
              plugin_baseline(data, PluginKind::MinNormLS, 0.0, ts.eval_pool);
          row.abs_error = std::abs(row.estimate - ts.v_base);
        } else if (est == "ridge") {
          row.estimate = plugin_baseline(data, PluginKind::Ridge,
                                         cfg.ridge_lambda, ts.eval_pool);
          row.abs_error = std::abs(row.estimate - ts.v_base);
        } else if (est == "approx") {
          double sum = 0.0;
          std::vector<double> z(cfg.K);
          for (const Matrix& ctx : ts.eval_pool) {
            const Vector values = ctx * ts.instance.theta;
            for (int a = 0; a < cfg.K; ++a) z[a] = values[a];
            sum += eval_poly(poly, z);
          }
          row.estimate = sum / double(ts.eval_pool.size());
          row.abs_error = std::abs(row.estimate - ts.v_base);
        } else if (est == "upper") {
          RngStream up_rng = substream(cfg.master_seed, "upper", cell);
          const FittedProcess fp =
              estimate_upper(data, ts.covs, cfg.upper, up_rng);
          row.estimate = fp.u_hat;
          row.abs_error = std::abs(row.estimate - ts.v_base);
        } else {
          throw ConfigError("estimator '" + est +
                            "' not supported in this scenario");
        }
      } catch (const Error& e) {
        row.failed = true;
        row.error = e.what();
      }
      row.runtime_ms = elapsed_ms(start);
      cell_rows[cell].push_back(std::move(row));
    }
  });

  ScenarioResult result;
  for (const auto& rows : cell_rows)
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  return result;
}

ScenarioResult run_upper_sweep(const ExperimentConfig& cfg) {
  validate_sweep(cfg);
  const int threads = resolve_threads(cfg.threads);
  const std::string sname = scenario_name(cfg.scenario);

  const BanditInstance instance = make_instance(
      cfg.law, cfg.d, cfg.K, cfg.params, derive_key(cfg.master_seed, "instance"));
  double v_true;
  try {
    v_true = oracle_v_star(instance, OracleMethod::ClosedForm).value;
  } catch (const UnsupportedError&) {
    v_true = oracle_v_star(instance, OracleMethod::MonteCarlo, 200000).value;
  }
  const CovarianceSet covs = true_covariances(instance);
  const double beta_true =
      instance.theta.dot(covs.sigma_pair[0][1] * instance.theta);

  const int grid = static_cast<int>(cfg.n_grid.size());
  const int cells = cfg.trials * grid;
  std::vector<std::vector<ResultRow>> cell_rows(cells);
  parallel_for(cells, threads, [&](int cell) {
    const int trial = cell / grid;
    const int n = cfg.n_grid[cell % grid];
    const std::uint64_t cell_seed =
        derive_key(cfg.master_seed, "data", std::uint64_t(cell));
    RngStream data_rng(cell_seed);
    const auto start = Clock::now();
    ResultRow urow, brow;
    urow.scenario = brow.scenario = sname;
    urow.trial = brow.trial = trial;
    urow.n = brow.n = n;
    urow.seed = brow.seed = cell_seed;
    urow.estimator = "UpperBound";
    brow.estimator = "IncrementError";
    try {
      const Dataset data = collect_uniform(instance, n, data_rng);
      RngStream mc_rng = substream(cfg.master_seed, "upper-mc", cell);
      const FittedProcess fp = estimate_upper(data, covs, cfg.upper, mc_rng);
      urow.estimate = fp.u_hat;
      urow.abs_error = std::abs(fp.u_hat - v_true);
      brow.estimate = fp.beta_hat(0, 1);
      brow.abs_error = std::abs(fp.beta_hat(0, 1) - beta_true);
    } catch (const Error& e) {
      urow.failed = brow.failed = true;
      urow.error = brow.error = e.what();
    }
    urow.runtime_ms = brow.runtime_ms = elapsed_ms(start);
    cell_rows[cell] = {std::move(urow), std::move(brow)};
  });

  ScenarioResult result;
  for (const auto& rows : cell_rows)
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  return result;
}

ScenarioResult run_selector_sweep(const ExperimentConfig& cfg) {
  if (cfg.trials < 1) throw ConfigError("trials: must be >= 1");
  const int threads = resolve_threads(cfg.threads);
  const std::string sname = scenario_name(cfg.scenario);

  const int runs = cfg.trials * 2;  // realizable and non-realizable variants
  std::vector<RunTrace> traces(runs);
  parallel_for(runs, threads, [&](int run) {
    const bool realizable = (run % 2) == 0;
    const NestedInstance nested = make_nested(
        cfg.nested_d1, cfg.d, cfg.K, realizable,
        realizable ? cfg.nested_head_norm : cfg.nested_head_norm_alt,
        cfg.nested_tail_norm, derive_key(cfg.master_seed, "nested", run));
    RngStream rng = substream(cfg.master_seed, "selector", run);
    traces[run] = run_selector(nested, cfg.selector, rng);
  });

  ScenarioResult result;
  for (int run = 0; run < runs; ++run) {
    const int trial = run / 2;
    const bool realizable = (run % 2) == 0;
    const RunTrace& trace = traces[run];
    const std::string label =
        realizable ? "selector-realizable" : "selector-nonrealizable";
    ResultRow row;
    row.scenario = sname;
    row.trial = trial;
    row.n = cfg.selector.T;
    row.estimator = label;
    row.seed = derive_key(cfg.master_seed, "selector", run);
    if (trace.failed) {
      row.failed = true;
      row.error = trace.failure;
    } else {
      row.estimate = trace.rows.empty() ? 0.0 : trace.rows.back().regret_cum;
      row.abs_error = row.estimate;
    }
    result.rows.push_back(row);

    ResultRow srow = row;
    srow.estimator = label + "-switch-time";
    srow.estimate = trace.switch_time ? double(*trace.switch_time)
                                      : std::numeric_limits<double>::quiet_NaN();
    srow.abs_error = std::numeric_limits<double>::quiet_NaN();
    result.rows.push_back(srow);

    result.traces.push_back(trace);
    result.trace_labels.push_back(
        (realizable ? std::string("realizable-") : std::string("nonrealizable-")) +
        std::to_string(trial));
  }
  return result;
}

ScenarioResult run_power(const ExperimentConfig& cfg) {
  if (cfg.reps < 1) throw ConfigError("treatment.reps: must be >= 1");
  if (cfg.n_grid.empty()) throw ConfigError("n_grid: must be nonempty");
  const int threads = resolve_threads(cfg.threads);

  TreatmentSetup setup = make_treatment_setup(
      cfg.d, cfg.treatment_a1, cfg.treatment_a2, /*effect=*/true, cfg.n_grid[0],
      cfg.treatment_p, derive_key(cfg.master_seed, "instance"));
  setup.c_test = cfg.c_test;
  setup.c_lr = cfg.c_lr;

  ScenarioResult result;
  std::vector<bool> effects;
  if (cfg.effect_mode == "null" || cfg.effect_mode == "both")
    effects.push_back(false);
  if (cfg.effect_mode == "effect" || cfg.effect_mode == "both")
    effects.push_back(true);
  for (bool effect : effects) {
    const auto rows =
        power_experiment(setup, cfg.n_grid, effect, cfg.reps,
                         derive_key(cfg.master_seed, "power"), threads);
    result.power.insert(result.power.end(), rows.begin(), rows.end());
  }
  return result;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  // Keyed by (estimator, n), in first-appearance order.
  std::vector<SummaryRow> summary;
  std::vector<std::vector<double>> samples;
  for (const auto& row : rows) {
    if (row.failed || std::isnan(row.abs_error)) continue;
    int idx = -1;
    for (std::size_t i = 0; i < summary.size(); ++i)
      if (summary[i].estimator == row.estimator && summary[i].n == row.n) {
        idx = static_cast<int>(i);
        break;
      }
    if (idx < 0) {
      SummaryRow s;
      s.scenario = row.scenario;
      s.n = row.n;
      s.estimator = row.estimator;
      summary.push_back(s);
      samples.emplace_back();
      idx = static_cast<int>(summary.size()) - 1;
    }
    samples[idx].push_back(row.abs_error);
  }
  for (std::size_t i = 0; i < summary.size(); ++i) {
    const auto& v = samples[i];
    const int n = static_cast<int>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    summary[i].trials = n;
    summary[i].mean_abs_error = mean;
    summary[i].stderr = n > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
  }
  std::stable_sort(summary.begin(), summary.end(),
                   [](const SummaryRow& a, const SummaryRow& b) {
                     if (a.estimator != b.estimator)
                       return a.estimator < b.estimator;
                     return a.n < b.n;
                   });
  return summary;
}

}  // namespace

ScenarioResult run_scenario(const ExperimentConfig& cfg) {
  ScenarioResult result;
  switch (cfg.scenario) {
    case Scenario::Fig1Dense:
    case Scenario::Fig1Sparse:
    case Scenario::Custom:
      result = run_error_sweep(cfg);
      break;
    case Scenario::UpperBoundRate:
      result = run_upper_sweep(cfg);
      break;
    case Scenario::ModelSelect:
      result = run_selector_sweep(cfg);
      break;
    case Scenario::Fig3Power:
      result = run_power(cfg);
      break;
  }
  result.summary = summarize(result.rows);
  return result;
}

void write_rows_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << "scenario,trial,n,estimator_name,estimate,abs_error,runtime_ms,seed\n";
  for (const auto& r : rows)
    os << r.scenario << "," << r.trial << "," << r.n << "," << r.estimator
       << "," << format_double(r.estimate) << "," << format_double(r.abs_error)
       << "," << format_double(r.runtime_ms) << "," << r.seed << "\n";
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "scenario,n,estimator_name,mean_abs_error,stderr,trials\n";
  for (const auto& r : rows)
    os << r.scenario << "," << r.n << "," << r.estimator << ","
       << format_double(r.mean_abs_error) << "," << format_double(r.stderr)
       << "," << r.trials << "\n";
}

void write_outputs(const ScenarioResult& result,
                   const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  const fs::path dir =
      config.output_dir.empty() ? fs::path(".") : fs::path(config.output_dir);
  fs::create_directories(dir);

  if (!result.rows.empty()) {
    if (config.format == "json") {
      nlohmann::ordered_json rows = nlohmann::ordered_json::array();
      for (const auto& r : result.rows) {
        nlohmann::ordered_json o;
        o["scenario"] = r.scenario;
        o["trial"] = r.trial;
        o["n"] = r.n;
        o["estimator_name"] = r.estimator;
        o["estimate"] = r.estimate;
        o["abs_error"] = r.abs_error;
        o["runtime_ms"] = r.runtime_ms;
        o["seed"] = r.seed;
        if (r.failed) o["error"] = r.error;
        rows.push_back(o);
      }
      std::ofstream(dir / "results.json") << rows.dump(2) << "\n";
    } else {
      std::ofstream os(dir / "results.csv");
      write_rows_csv(os, result.rows);
    }
    std::ofstream sos(dir / "summary.csv");
    write_summary_csv(sos, result.summary);
  }
  if (!result.power.empty()) {
    std::ofstream os(dir / "power.csv");
    write_power_csv(os, result.power);
  }
  for (std::size_t i = 0; i < result.traces.size(); ++i) {
    std::ofstream os(dir / ("trace-" + result.trace_labels[i] + ".csv"));
    write_run_trace_csv(os, result.traces[i]);
  }
  // Failures, if any, go to a side file so the sweep record stays complete.
  std::vector<const ResultRow*> failures;
  for (const auto& r : result.rows)
    if (r.failed) failures.push_back(&r);
  if (!failures.empty()) {
    std::ofstream os(dir / "failures.csv");
    os << "scenario,trial,n,estimator_name,error\n";
    for (const auto* r : failures)
      os << r->scenario << "," << r->trial << "," << r->n << ","
         << r->estimator << ",\"" << r->error << "\"\n";
  }
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("VSTAR_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

}  // namespace vstar
