#include "vstar/gp_upper.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vstar {

namespace {

double minimax_objective(const Matrix& lambda, const Matrix& beta) {
  const int K = static_cast<int>(lambda.rows());
  double worst = 0.0;
  for (int a = 0; a < K; ++a)
    for (int b = a + 1; b < K; ++b) {
      const double inc = lambda(a, a) + lambda(b, b) - 2.0 * lambda(a, b);
      worst = std::max(worst, std::abs(inc - beta(a, b)));
    }
  return worst;
}

Matrix project_psd(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  Vector clipped = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * clipped.asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

std::pair<Vector, Vector> split_theta(const Dataset& dataset) {
  if (!dataset.whitened)
    throw InvalidParameterError("split_theta: dataset must be whitened");
  const int n = dataset.size();
  if (n < 2)
    throw InsufficientDataError("split_theta: need at least 2 records");
  const int m = n / 2;
  Vector first = Vector::Zero(dataset.d);
  Vector second = Vector::Zero(dataset.d);
  for (int i = 0; i < m; ++i)
    first += dataset.records[i].reward * dataset.chosen_features(i);
  for (int i = m; i < 2 * m; ++i)
    second += dataset.records[i].reward * dataset.chosen_features(i);
  return {first / double(m), second / double(m)};
}

IncrementEstimates increments(const Vector& theta_hat,
                              const Vector& theta_hat_prime,
                              const CovarianceSet& covs) {
  const int K = covs.actions();
  const int d = covs.dim();
  if (theta_hat.size() != d || theta_hat_prime.size() != d)
    throw DimensionMismatchError("increments: parameter dimension mismatch");
  IncrementEstimates inc;
  inc.beta_hat = Matrix::Zero(K, K);
  for (int a = 0; a < K; ++a)
    for (int b = a + 1; b < K; ++b) {
      const Matrix& s = covs.sigma_pair[a][b];
      const double v = 0.5 * (theta_hat.dot(s * theta_hat_prime) +
                              theta_hat_prime.dot(s * theta_hat));
      inc.beta_hat(a, b) = v;
      inc.beta_hat(b, a) = v;
    }
  return inc;
}

PsdFitResult psd_fit(const IncrementEstimates& inc, double tol, int max_iter) {
  const int K = inc.actions();
  if (K < 2) throw InvalidParameterError("psd_fit: K must be >= 2");
  const Matrix& beta = inc.beta_hat;

  if (K == 2) {
    const double b = std::max(beta(0, 1), 0.0);
    Matrix lambda(2, 2);
    lambda << b / 4.0, -b / 4.0, -b / 4.0, b / 4.0;
    return {lambda, std::max(0.0, -beta(0, 1))};
  }

  // Warm start: the centered Gram embedding reproduces the increments
  // exactly whenever beta is a consistent squared-distance matrix.
  const Matrix centering =
      Matrix::Identity(K, K) - Matrix::Constant(K, K, 1.0 / K);
  Matrix lambda = project_psd(-0.5 * centering * beta * centering);

  Matrix best = lambda;
  double best_obj = minimax_objective(lambda, beta);
  const double scale = std::max(1e-3, beta.cwiseAbs().maxCoeff());
  double last_improvement_obj = best_obj;
  int since_improvement = 0;

  for (int iter = 1; iter <= max_iter && best_obj > 0.0; ++iter) {
    // Subgradient of the active pair.
    int wa = 0, wb = 1;
    double worst = -1.0;
    double sign = 1.0;
    for (int a = 0; a < K; ++a)
      for (int b = a + 1; b < K; ++b) {
        const double inc_ab =
            lambda(a, a) + lambda(b, b) - 2.0 * lambda(a, b);
        const double viol = inc_ab - beta(a, b);
        if (std::abs(viol) > worst) {
          worst = std::abs(viol);
          wa = a;
          wb = b;
          sign = viol >= 0.0 ? 1.0 : -1.0;
        }
      }
    Matrix grad = Matrix::Zero(K, K);
    grad(wa, wa) = sign;
    grad(wb, wb) = sign;
    grad(wa, wb) = -sign;
    grad(wb, wa) = -sign;

    const double step = 0.25 * scale / std::sqrt(double(iter));
    lambda = project_psd(lambda - step * grad);

    const double obj = minimax_objective(lambda, beta);
    if (obj < best_obj) {
      best_obj = obj;
      best = lambda;
    }
    if (++since_improvement >= 50) {
      if (last_improvement_obj - best_obj < tol) break;
      last_improvement_obj = best_obj;
      since_improvement = 0;
    }
  }
  return {best, best_obj};
}

double expected_max_closed_form_k2(const Matrix& lambda) {
  if (lambda.rows() != 2 || lambda.cols() != 2)
    throw DimensionMismatchError("expected_max_closed_form_k2: need 2x2");
  const double inc = lambda(0, 0) + lambda(1, 1) - 2.0 * lambda(0, 1);
  return std::sqrt(std::max(0.0, inc) / (2.0 * M_PI));
}

ExpectedMaxValue expected_max(const Matrix& lambda, int n_mc, RngStream& rng) {
  const int K = static_cast<int>(lambda.rows());
  if (lambda.cols() != K)
    throw DimensionMismatchError("expected_max: lambda must be square");
  if (n_mc < 1)
    throw InvalidParameterError("expected_max: n_mc must be >= 1");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 *
                                            (lambda + lambda.transpose()));
  if (eig.eigenvalues().minCoeff() < -1e-6)
    throw InvalidParameterError(
        "expected_max: covariance has eigenvalue " +
        std::to_string(eig.eigenvalues().minCoeff()) + " below -1e-6");
  Vector sqrt_evals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Matrix root = eig.eigenvectors() * sqrt_evals.asDiagonal() *
                eig.eigenvectors().transpose();

  // Antithetic pairs (Z, -Z); pair averages are the independent units.
  const int pairs = std::max(1, (n_mc + 1) / 2);
  double sum = 0.0, sumsq = 0.0;
  Vector g(K);
  for (int i = 0; i < pairs; ++i) {
    for (int k = 0; k < K; ++k) g[k] = rng.gaussian();
    const Vector z = root * g;
    const double v = 0.5 * (z.maxCoeff() + (-z).maxCoeff());
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / pairs;
  double stderr = 0.0;
  if (pairs > 1) {
    const double var =
        std::max(0.0, (sumsq - pairs * mean * mean) / (pairs - 1));
    stderr = std::sqrt(var / pairs);
  }
  return {mean, stderr, 2 * pairs};
}

FittedProcess estimate_upper(const Dataset& dataset, const CovarianceSet& covs,
                             const UpperConfig& config, RngStream& rng) {
  const Dataset wdata =
      dataset.whitened ? dataset : whiten(dataset, covs.sigma_avg);
  const CovarianceSet wcovs =
      dataset.whitened ? covs : whiten(covs, covs.sigma_avg);

  const auto [theta_hat, theta_hat_prime] = split_theta(wdata);
  const IncrementEstimates inc = increments(theta_hat, theta_hat_prime, wcovs);
  const PsdFitResult fit = psd_fit(inc.beta_hat.rows() >= 2
                                       ? inc
                                       : IncrementEstimates{inc.beta_hat},
                                   config.tol, config.max_iter);

  FittedProcess out;
  out.beta_hat = inc.beta_hat;
  out.lambda_tilde = fit.lambda;
  out.residual = fit.residual;
  if (config.closed_form_k2 && fit.lambda.rows() == 2) {
    out.u_hat = expected_max_closed_form_k2(fit.lambda);
    out.u_stderr = 0.0;
    out.mc_samples = 0;
  } else {
    const ExpectedMaxValue em = expected_max(fit.lambda, config.n_mc, rng);
    out.u_hat = em.u_hat;
    out.u_stderr = em.stderr;
    out.mc_samples = em.samples;
  }
  return out;
}

IncrementEstimates theta_diff_increments(const Dataset& dataset, int d1,
                                         const CovarianceSet& covs) {
  if (d1 < 0 || d1 >= dataset.d)
    throw InvalidParameterError(
        "theta_diff_increments: d1 must lie in [0, d)");
  Dataset masked = dataset;
  for (auto& rec : masked.records) rec.features.leftCols(d1).setZero();
  const auto [theta_hat, theta_hat_prime] = split_theta(masked);
  return increments(theta_hat, theta_hat_prime, covs);
}

}  // namespace vstar
