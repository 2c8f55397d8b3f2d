#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "vstar/bench.hpp"
#include "vstar/io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw vstar::ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

vstar::ExperimentConfig load_config(const std::string& path,
                                    const std::string& fallback_scenario) {
  if (path.empty())
    return vstar::default_config(
        vstar::scenario_from_name(fallback_scenario));
  return vstar::config_from_json_text(read_file(path));
}

struct CommonFlags {
  std::string config_path;
  std::int64_t seed = -1;
  int trials = 0;
  std::string out;
  int threads = 0;
  std::string format;

  void apply(vstar::ExperimentConfig& cfg) const {
    if (seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed);
    if (trials > 0) cfg.trials = trials;
    if (!out.empty()) cfg.output_dir = out;
    if (threads > 0) cfg.threads = threads;
    if (!format.empty()) cfg.format = format;
  }
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON experiment config");
  cmd->add_option("--seed", flags.seed, "master seed override");
  cmd->add_option("--trials", flags.trials, "trial count override");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--threads", flags.threads,
                  "worker threads (default: VSTAR_THREADS or 1)");
  cmd->add_option("--format", flags.format, "output format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal-policy-value estimation benchmarks"};
  app.require_subcommand(1);

  CommonFlags bench_flags, vstar_flags, upper_flags, select_flags, treat_flags;
  std::string bench_scenario = "fig1";
  std::string validate_path;
  int sample_n = 0;

  CLI::App* bench = app.add_subcommand("bench", "run a benchmark scenario");
  bench->add_option("scenario", bench_scenario,
                    "fig1 | fig1-sparse | fig3-power | model-select | "
                    "upper-rate | custom");
  add_common(bench, bench_flags);

  CLI::App* ev = app.add_subcommand("estimate-vstar",
                                    "one moment-estimator run (JSON out)");
  add_common(ev, vstar_flags);
  ev->add_option("--n", sample_n, "sample size (default: first n_grid entry)");

  CLI::App* eu = app.add_subcommand("estimate-upper",
                                    "one upper-bound run (JSON out)");
  add_common(eu, upper_flags);
  eu->add_option("--n", sample_n, "sample size (default: first n_grid entry)");

  CLI::App* ms =
      app.add_subcommand("model-select", "one model-selection run (trace out)");
  add_common(ms, select_flags);

  CLI::App* tt =
      app.add_subcommand("treatment-test", "one treatment test (JSON out)");
  add_common(tt, treat_flags);

  CLI::App* vc = app.add_subcommand("validate-config",
                                    "check a config file and exit");
  vc->add_option("path", validate_path, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*vc) {
      vstar::config_from_json_text(read_file(validate_path));
      std::cout << "ok\n";
      return kExitOk;
    }

    if (*bench) {
      vstar::ExperimentConfig cfg =
          load_config(bench_flags.config_path, bench_scenario);
      if (bench_flags.config_path.empty())
        cfg.scenario = vstar::scenario_from_name(bench_scenario);
      bench_flags.apply(cfg);
      const vstar::ScenarioResult result = vstar::run_scenario(cfg);
      vstar::write_outputs(result, cfg);
      std::cout << "wrote "
                << (cfg.output_dir.empty() ? "." : cfg.output_dir) << " ("
                << result.rows.size() << " rows, " << result.power.size()
                << " power rows, " << result.traces.size() << " traces)\n";
      return kExitOk;
    }

    if (*ev) {
      vstar::ExperimentConfig cfg = load_config(vstar_flags.config_path, "fig1");
      vstar_flags.apply(cfg);
      const int n = sample_n > 0 ? sample_n : cfg.n_grid.at(0);
      const auto instance =
          vstar::make_instance(cfg.law, cfg.d, cfg.K, cfg.params,
                               vstar::derive_key(cfg.master_seed, "instance", 0));
      vstar::RngStream data_rng =
          vstar::substream(cfg.master_seed, "data", 0);
      auto data = vstar::collect_uniform(instance, n, data_rng);
      const auto covs = vstar::true_covariances(instance);
      data = vstar::whiten(data, covs.sigma_avg);
      std::unique_ptr<vstar::MomentOracle> oracle;
      if (cfg.moment_oracle == vstar::MomentOracleKind::Analytic) {
        oracle = std::make_unique<vstar::AnalyticRademacherOracle>(cfg.d);
      } else {
        vstar::RngStream pool_rng =
            vstar::substream(cfg.master_seed, "moment-pool", 0);
        oracle = std::make_unique<vstar::UnlabeledPoolOracle>(
            vstar::collect_unlabeled(instance, cfg.moment_pool_size, pool_rng));
      }
      const auto poly =
          vstar::fit_l1(cfg.K, cfg.poly_degree, cfg.poly_points, cfg.poly_lo,
                        cfg.poly_hi, vstar::derive_key(cfg.master_seed, "poly"));
      vstar::RngStream mom_rng = vstar::substream(cfg.master_seed, "moment", 0);
      const auto [estimate, table] =
          vstar::estimate_v_star_moment(data, poly, cfg.moment, *oracle, mom_rng);
      std::cout << "{\n  \"estimate\": " << vstar::format_double(estimate)
                << ",\n  \"n\": " << n << ",\n  \"degree\": "
                << cfg.moment.degree << "\n}\n";
      if (!vstar_flags.out.empty()) {
        std::ofstream os(vstar_flags.out + "/moment_table.csv");
        vstar::write_moment_table_csv(os, table);
      }
      return kExitOk;
    }

    if (*eu) {
      vstar::ExperimentConfig cfg =
          load_config(upper_flags.config_path, "upper-rate");
      upper_flags.apply(cfg);
      const int n = sample_n > 0 ? sample_n : cfg.n_grid.at(0);
      const auto instance =
          vstar::make_instance(cfg.law, cfg.d, cfg.K, cfg.params,
                               vstar::derive_key(cfg.master_seed, "instance", 0));
      vstar::RngStream data_rng = vstar::substream(cfg.master_seed, "data", 0);
      const auto data = vstar::collect_uniform(instance, n, data_rng);
      vstar::RngStream mc_rng = vstar::substream(cfg.master_seed, "upper-mc", 0);
      const auto fp = vstar::estimate_upper(data, vstar::true_covariances(instance),
                                            cfg.upper, mc_rng);
      std::cout << vstar::fitted_process_to_json(fp) << "\n";
      return kExitOk;
    }

    if (*ms) {
      vstar::ExperimentConfig cfg =
          load_config(select_flags.config_path, "model-select");
      select_flags.apply(cfg);
      const auto nested = vstar::make_nested(
          cfg.nested_d1, cfg.d, cfg.K, cfg.selector_realizable,
          cfg.selector_realizable ? cfg.nested_head_norm
                                  : cfg.nested_head_norm_alt,
          cfg.nested_tail_norm,
          vstar::derive_key(cfg.master_seed, "nested", 0));
      vstar::RngStream rng = vstar::substream(cfg.master_seed, "selector", 0);
      const auto trace = vstar::run_selector(nested, cfg.selector, rng);
      if (trace.failed) {
        std::cerr << "run failed: " << trace.failure << "\n";
        return kExitNumerical;
      }
      if (!select_flags.out.empty()) {
        std::ofstream os(select_flags.out + "/trace.csv");
        vstar::write_run_trace_csv(os, trace);
      } else {
        vstar::write_run_trace_csv(std::cout, trace);
      }
      return kExitOk;
    }

    if (*tt) {
      vstar::ExperimentConfig cfg =
          load_config(treat_flags.config_path, "fig3-power");
      treat_flags.apply(cfg);
      auto setup = vstar::make_treatment_setup(
          cfg.d, cfg.treatment_a1, cfg.treatment_a2,
          cfg.effect_mode != "null", cfg.n_grid.at(0), cfg.treatment_p,
          vstar::derive_key(cfg.master_seed, "instance"));
      setup.c_test = cfg.c_test;
      setup.c_lr = cfg.c_lr;
      vstar::RngStream rng = vstar::substream(cfg.master_seed, "treatment", 0);
      const auto fp = vstar::run_treatment_pipeline(setup, rng);
      const int psi = vstar::psi_test(fp.u_hat, cfg.d, setup.p, setup.n,
                                      setup.c_test);
      vstar::RngStream lr_rng = vstar::substream(cfg.master_seed, "lr", 0);
      const auto lr = vstar::lr_baseline_test(setup, lr_rng);
      std::cout << "{\n  \"u_hat\": " << vstar::format_double(fp.u_hat)
                << ",\n  \"psi\": " << psi
                << ",\n  \"w_hat\": " << vstar::format_double(lr.w_hat)
                << ",\n  \"psi_lr\": " << lr.psi_lr << "\n}\n";
      return kExitOk;
    }
  } catch (const vstar::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const vstar::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
