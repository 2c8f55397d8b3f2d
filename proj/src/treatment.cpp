#include "vstar/treatment.hpp"

#include <cmath>

#include "vstar/parallel.hpp"

namespace vstar {

TreatmentSetup make_treatment_setup(int d, int a1_size, int a2_size,
                                    bool effect, int n, int p,
                                    std::uint64_t seed) {
  LawParams params;
  params.a1_size = a1_size;
  params.a2_size = a2_size;
  params.no_effect = !effect;
  TreatmentSetup setup;
  setup.instance = make_instance(FeatureLawKind::TreatmentSplit, d,
                                 a1_size + a2_size - 1, params, seed);
  setup.n = n;
  setup.p = p;
  return setup;
}

namespace {

Matrix floored_inverse(const Matrix& m, double floor) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.eigenvalues().minCoeff() < floor)
    throw SingularCovarianceError(
        "treatment: pooled covariance is singular (p too small)");
  return eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

FittedProcess run_treatment_pipeline(const TreatmentSetup& setup,
                                     RngStream& rng) {
  if (setup.n < 2)
    throw InvalidParameterError("run_treatment_pipeline: n must be >= 2");
  if (setup.p < 1)
    throw InvalidParameterError("run_treatment_pipeline: p must be >= 1");
  const BanditInstance& inst = setup.instance;
  const auto& a1 = inst.logging_actions;
  const auto& a2 = inst.ambitious_actions;
  if (a2.size() < 2)
    throw InvalidParameterError("run_treatment_pipeline: |A2| must be >= 2");

  const std::vector<Matrix> pool = collect_unlabeled(inst, setup.p, rng);
  const CovarianceSet covs = estimate_covariances(pool, a1, a2);
  const Matrix sigma_inv = floored_inverse(covs.sigma_avg, 1e-10);

  const Dataset data = collect_uniform(inst, setup.n, rng);
  const int m = setup.n / 2;
  Vector mu = Vector::Zero(inst.d), mu_prime = Vector::Zero(inst.d);
  for (int i = 0; i < m; ++i)
    mu += data.records[i].reward * data.chosen_features(i);
  for (int i = m; i < 2 * m; ++i)
    mu_prime += data.records[i].reward * data.chosen_features(i);
  const Vector theta_hat = sigma_inv * (mu / double(m));
  const Vector theta_hat_prime = sigma_inv * (mu_prime / double(m));

  // Increments over the ambitious set only.
  const int k2 = static_cast<int>(a2.size());
  IncrementEstimates inc;
  inc.beta_hat = Matrix::Zero(k2, k2);
  for (int i = 0; i < k2; ++i)
    for (int j = i + 1; j < k2; ++j) {
      const Matrix& s = covs.sigma_pair[a2[i] - 1][a2[j] - 1];
      const double v = 0.5 * (theta_hat.dot(s * theta_hat_prime) +
                              theta_hat_prime.dot(s * theta_hat));
      inc.beta_hat(i, j) = v;
      inc.beta_hat(j, i) = v;
    }

  const PsdFitResult fit = psd_fit(inc);
  FittedProcess out;
  out.beta_hat = inc.beta_hat;
  out.lambda_tilde = fit.lambda;
  out.residual = fit.residual;
  if (setup.closed_form_k2 && k2 == 2) {
    out.u_hat = expected_max_closed_form_k2(fit.lambda);
  } else {
    const ExpectedMaxValue em = expected_max(fit.lambda, setup.n_mc, rng);
    out.u_hat = em.u_hat;
    out.u_stderr = em.stderr;
    out.mc_samples = em.samples;
  }
  return out;
}

int psi_test(double u_hat, int d, int p, int n, double c_test) {
  if (d < 1 || p < 1 || n < 1)
    throw InvalidParameterError("psi_test: d, p, n must be >= 1");
  const double threshold =
      c_test * (std::sqrt(double(d) / p) + std::pow(double(d), 0.25) /
                                               std::sqrt(double(n)));
  return u_hat <= threshold ? 0 : 1;
}

LrTestResult lr_baseline_test(const TreatmentSetup& setup, RngStream& rng) {
  if (setup.n < 5)
    throw InsufficientDataError("lr_baseline_test: n must be >= 5");
  const BanditInstance& inst = setup.instance;
  const Dataset data = collect_uniform(inst, setup.n, rng);
  const int n_in = (setup.n * 4) / 5;
  const int n_out = setup.n - n_in;

  Vector theta_hat = Vector::Zero(inst.d);
  for (int i = 0; i < n_in; ++i)
    theta_hat += data.records[i].reward * data.chosen_features(i);
  theta_hat /= double(n_in);

  double w_sum = 0.0;
  for (int i = n_in; i < setup.n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a : inst.ambitious_actions)
      best = std::max(best,
                      data.records[i].features.row(a - 1).dot(theta_hat));
    w_sum += best;
  }
  LrTestResult out;
  out.w_hat = w_sum / double(n_out);
  const double threshold = setup.c_lr * std::sqrt(double(inst.d) / setup.n);
  out.psi_lr = out.w_hat <= threshold ? 0 : 1;
  return out;
}

std::vector<PowerRow> power_experiment(const TreatmentSetup& base,
                                       const std::vector<int>& n_grid,
                                       bool effect, int reps,
                                       std::uint64_t seed, int threads) {
  if (reps < 1)
    throw InvalidParameterError("power_experiment: reps must be >= 1");
  if (n_grid.empty())
    throw InvalidParameterError("power_experiment: empty n grid");

  // Rebuild the instance so its effect flag matches; theta stays fixed
  // across replications.
  LawParams params = base.instance.params;
  params.no_effect = !effect;
  TreatmentSetup setup = base;
  setup.instance = make_instance(base.instance.law, base.instance.d,
                                 base.instance.K, params,
                                 base.instance.rng_stream_id);

  const int cells = static_cast<int>(n_grid.size()) * reps;
  std::vector<int> psi(cells, 0), lr(cells, 0);
  parallel_for(cells, threads, [&](int cell) {
    const int ni = cell / reps;
    const int rep = cell % reps;
    TreatmentSetup local = setup;
    local.n = n_grid[ni];
    RngStream pipeline_rng =
        substream(seed, effect ? "power-effect" : "power-null",
                  std::uint64_t(cell));
    psi[cell] = psi_test(run_treatment_pipeline(local, pipeline_rng).u_hat,
                         local.instance.d, local.p, local.n, local.c_test);
    RngStream lr_rng =
        substream(seed, effect ? "power-effect-lr" : "power-null-lr",
                  std::uint64_t(cell));
    lr[cell] = lr_baseline_test(local, lr_rng).psi_lr;
    (void)rep;
  });

  std::vector<PowerRow> rows;
  for (std::size_t ni = 0; ni < n_grid.size(); ++ni) {
    int psi_hits = 0, lr_hits = 0;
    for (int r = 0; r < reps; ++r) {
      psi_hits += psi[ni * reps + r];
      lr_hits += lr[ni * reps + r];
    }
    PowerRow row;
    row.n = n_grid[ni];
    row.effect = effect;
    row.reps = reps;
    row.psi_rate = double(psi_hits) / reps;
    row.lr_rate = double(lr_hits) / reps;
    if (reps > 1) {
      row.psi_stderr = std::sqrt(row.psi_rate * (1.0 - row.psi_rate) / reps);
      row.lr_stderr = std::sqrt(row.lr_rate * (1.0 - row.lr_rate) / reps);
    } else {
      row.psi_stderr = std::numeric_limits<double>::quiet_NaN();
      row.lr_stderr = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace vstar
