#pragma once

#include "vstar/bandit.hpp"

namespace vstar {

/// Pairwise squared-increment estimates beta_hat for the arm-value process.
/// Symmetric with an identically zero diagonal; entries may be negative.
struct IncrementEstimates {
  Matrix beta_hat;

  int actions() const { return static_cast<int>(beta_hat.rows()); }
};

/// Result of fitting a majorizing Gaussian process and evaluating its
/// expected maximum.
struct FittedProcess {
  Matrix beta_hat;
  Matrix lambda_tilde;
  double residual = 0.0;
  double u_hat = 0.0;
  double u_stderr = 0.0;
  int mc_samples = 0;
};

struct UpperConfig {
  int n_mc = 100000;
  double tol = 1e-6;
  int max_iter = 5000;
  /// Evaluate K=2 processes by the closed form instead of Monte Carlo.
  bool closed_form_k2 = false;
};

/// Halves the dataset (odd n drops the last record) and returns each half's
/// average of y * phi(x, a). Requires a whitened dataset of size >= 2.
std::pair<Vector, Vector> split_theta(const Dataset& dataset);

/// beta_hat[a][a'] = (th^T S th' + th'^T S th) / 2 with S = sigma_pair[a][a'].
IncrementEstimates increments(const Vector& theta_hat,
                              const Vector& theta_hat_prime,
                              const CovarianceSet& covs);

struct PsdFitResult {
  Matrix lambda;
  double residual = 0.0;
};

/// Minimax increment-matching fit over the PSD cone: projected subgradient
/// with eigenvalue clipping, diminishing steps and best-iterate tracking,
/// warm-started from the centered embedding of beta_hat. K=2 has an exact
/// closed form. Always returns the best iterate; non-convergence shows up
/// as a larger residual.
PsdFitResult psd_fit(const IncrementEstimates& inc, double tol = 1e-6,
                     int max_iter = 5000);

struct ExpectedMaxValue {
  double u_hat = 0.0;
  double stderr = 0.0;
  int samples = 0;
};

/// Monte-Carlo E max of N(0, lambda) with antithetic pairs; n_mc is rounded
/// up to an even number of draws. Requires lambda_min >= -1e-6.
ExpectedMaxValue expected_max(const Matrix& lambda, int n_mc, RngStream& rng);

/// Exact K=2 value sqrt((l11 + l22 - 2 l12) / (2 pi)).
double expected_max_closed_form_k2(const Matrix& lambda);

/// Full pipeline: whiten -> split -> increments -> psd_fit -> expected_max.
FittedProcess estimate_upper(const Dataset& dataset, const CovarianceSet& covs,
                             const UpperConfig& config, RngStream& rng);

/// Increments of the class-difference parameter: zeroes the first d1 feature
/// coordinates before the split, so the estimates target the suffix block.
IncrementEstimates theta_diff_increments(const Dataset& dataset, int d1,
                                         const CovarianceSet& covs);

}  // namespace vstar
