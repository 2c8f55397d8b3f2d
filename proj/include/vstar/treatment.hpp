#pragma once

#include "vstar/bandit.hpp"
#include "vstar/gp_upper.hpp"

namespace vstar {

/// Treatment-effect testing problem: a TreatmentSplit instance, labeled and
/// unlabeled budgets, and the two decision thresholds.
struct TreatmentSetup {
  BanditInstance instance;
  int n = 300;        ///< labeled budget (logged uniformly over A1)
  int p = 2000;       ///< unlabeled context budget
  double c_test = 0.2;
  double c_lr = 0.33;
  int n_mc = 100000;
  bool closed_form_k2 = true;
};

TreatmentSetup make_treatment_setup(int d, int a1_size, int a2_size,
                                    bool effect, int n, int p,
                                    std::uint64_t seed);

/// Full statistic over the ambitious set A2: covariances from the unlabeled
/// pool (policy average over A1 only), split parameter estimates through the
/// floored inverse of the pooled covariance, increments over A2 pairs, PSD
/// fit and expected max.
FittedProcess run_treatment_pipeline(const TreatmentSetup& setup,
                                     RngStream& rng);

/// Psi = 0 iff u_hat <= c_test * (sqrt(d/p) + d^{1/4} / sqrt(n)).
int psi_test(double u_hat, int d, int p, int n, double c_test);

struct LrTestResult {
  double w_hat = 0.0;
  int psi_lr = 0;
};

/// Plug-in baseline: 80/20 split, in-split mean of y*phi as the parameter,
/// held-out mean of max over A2, thresholded at c_lr * sqrt(d/n).
LrTestResult lr_baseline_test(const TreatmentSetup& setup, RngStream& rng);

struct PowerRow {
  int n = 0;
  bool effect = false;
  double psi_rate = 0.0;
  double psi_stderr = 0.0;  ///< NaN when reps == 1
  double lr_rate = 0.0;
  double lr_stderr = 0.0;   ///< NaN when reps == 1
  int reps = 0;
};

/// Rejection rates over `reps` independent replications for each n in the
/// grid. Replications use per-cell substreams and may run in parallel.
std::vector<PowerRow> power_experiment(const TreatmentSetup& base,
                                       const std::vector<int>& n_grid,
                                       bool effect, int reps,
                                       std::uint64_t seed, int threads = 1);

}  // namespace vstar
