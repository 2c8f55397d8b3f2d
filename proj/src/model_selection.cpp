#include "vstar/model_selection.hpp"

#include <algorithm>
#include <cmath>

namespace vstar {

NestedInstance make_nested(int d1, int d2, int K, bool realizable,
                           double head_norm, double tail_norm,
                           std::uint64_t seed) {
  LawParams params;
  params.d1 = d1;
  params.head_norm = head_norm;
  params.tail_norm = realizable ? 0.0 : tail_norm;
  NestedInstance nested;
  nested.base = make_instance(FeatureLawKind::NestedPair, d2, K, params, seed);
  nested.d1 = d1;
  nested.realizable_in_f1 = realizable;
  return nested;
}

ScheduleValues schedule(int t, const SelectorConfig& config, int d2, int K) {
  if (t < 1) throw InvalidParameterError("schedule: t must be >= 1");
  ScheduleValues out;
  out.explore_prob = std::pow(double(t), -1.0 / 3.0);
  const double T = config.T;
  const double delta = config.delta;
  const double log_kdt = std::log(double(K) * d2 * T / delta);
  const double d2_quarter = std::pow(double(d2), 0.25);
  // Log arguments are clamped away from zero so tiny horizons stay defined;
  // t_min is floored at 2 since the statistic needs two exploration samples.
  if (config.known_cov) {
    const double arg = std::max(T * std::log(T) / delta, M_E);
    out.t_min = std::max(
        2, static_cast<int>(std::ceil(config.C0 * std::pow(std::log(arg), 1.5))));
    out.alpha_t = config.C1 * d2_quarter * std::pow(log_kdt, 1.5) /
                  std::cbrt(double(t));
  } else {
    const double tau4_rho2 =
        std::pow(config.tau, 4.0) / (config.rho * config.rho);
    const double log_kt = std::log(double(K) * T / delta);
    const double arg = std::max(T * std::log(double(K) * T) / delta, M_E);
    out.t_min = std::max(
        2, static_cast<int>(std::ceil(
               config.C0 * (1.0 + std::pow(std::log(arg), 1.5) +
                            tau4_rho2 * (d2 + log_kt) + d2 * log_kt))));
    out.alpha_t =
        config.C1 * d2_quarter * std::pow(log_kdt, 1.5) / std::cbrt(double(t)) +
        config.C2 * std::sqrt(double(d2)) * log_kdt / std::sqrt(double(t));
  }
  return out;
}

Exp4IX::Exp4IX(int dim, int K, int policy_count, double gamma_scale,
               std::uint64_t expert_seed)
    : dim_(dim), K_(K), gamma_scale_(gamma_scale) {
  if (dim < 1 || K < 1 || policy_count < 0)
    throw InvalidParameterError("Exp4IX: bad dimensions");
  RngStream rng = substream(expert_seed, "exp4-experts");
  experts_.resize(policy_count + 1, dim);
  for (int e = 0; e < policy_count; ++e) {
    Vector v(dim);
    for (int j = 0; j < dim; ++j) v[j] = rng.gaussian();
    const double norm = v.norm();
    experts_.row(e) = (norm == 0.0 ? Vector::Unit(dim, 0) : Vector(v / norm))
                          .transpose();
  }
  experts_.row(policy_count) =
      Vector::Constant(dim, 1.0 / std::sqrt(double(dim))).transpose();
  weights_ = Vector::Constant(policy_count + 1, 1.0 / (policy_count + 1));
}

std::vector<int> Exp4IX::advice(const Matrix& context) const {
  // Each expert's argmax action over its preferred direction.
  const Matrix scores =
      context.leftCols(dim_) * experts_.transpose();  // K x M
  std::vector<int> out(expert_count());
  for (int e = 0; e < expert_count(); ++e) {
    int best = 0;
    scores.col(e).maxCoeff(&best);
    out[e] = best + 1;
  }
  return out;
}

Vector Exp4IX::action_distribution(const Matrix& context) const {
  const std::vector<int> adv = advice(context);
  Vector p = Vector::Zero(K_);
  for (int e = 0; e < expert_count(); ++e) p[adv[e] - 1] += weights_[e];
  return p / p.sum();
}

int Exp4IX::step(const Matrix& context, RngStream& rng) const {
  const Vector p = action_distribution(context);
  double u = rng.uniform();
  for (int a = 0; a < K_; ++a) {
    u -= p[a];
    if (u <= 0.0) return a + 1;
  }
  return K_;
}

void Exp4IX::update(const Matrix& context, int action, double reward) {
  if (!range_init_) {
    reward_lo_ = reward_hi_ = reward;
    range_init_ = true;
  }
  reward_lo_ = std::min(reward_lo_, reward);
  reward_hi_ = std::max(reward_hi_, reward);
  const double span = std::max(reward_hi_ - reward_lo_, 1e-12);
  const double lo = reward_lo_ - 0.1 * span;
  const double hi = reward_hi_ + 0.1 * span;
  const double loss =
      1.0 - std::clamp((reward - lo) / (hi - lo), 0.0, 1.0);

  ++updates_;
  const double eta =
      gamma_scale_ *
      std::sqrt(std::log(double(expert_count())) / (double(K_) * updates_));
  const double gamma = eta / 2.0;

  const std::vector<int> adv = advice(context);
  Vector p = Vector::Zero(K_);
  for (int e = 0; e < expert_count(); ++e) p[adv[e] - 1] += weights_[e];
  p /= p.sum();

  const double loss_hat = loss / (p[action - 1] + gamma);
  for (int e = 0; e < expert_count(); ++e)
    if (adv[e] == action)
      weights_[e] *= std::exp(-eta * loss_hat);
  weights_ /= weights_.sum();
}

namespace {

// Unknown-covariance class-gap increments, built entirely from the trace:
// covariances from exploitation-round contexts, the difference parameter
// from the exploration halves through the inverse-correction operator.
struct UnknownCovState {
  Matrix sigma2_sum;   // sum over contexts of sum_a phi_a phi_a^T
  Matrix pair_sum_01;  // K = 2: sum of (phi_1 - phi_2)(phi_1 - phi_2)^T
  std::vector<Matrix> pair_sums;  // general K, flattened upper triangle
  long contexts = 0;
  int d2 = 0;
  int K = 0;

  void init(int d, int k) {
    d2 = d;
    K = k;
    sigma2_sum = Matrix::Zero(d, d);
    pair_sums.assign(k * (k - 1) / 2, Matrix::Zero(d, d));
  }
  void add(const Matrix& ctx) {
    for (int a = 0; a < K; ++a)
      sigma2_sum += ctx.row(a).transpose() * ctx.row(a);
    int idx = 0;
    for (int a = 0; a < K; ++a)
      for (int b = a + 1; b < K; ++b, ++idx) {
        const Vector diff = (ctx.row(a) - ctx.row(b)).transpose();
        pair_sums[idx] += diff * diff.transpose();
      }
    ++contexts;
  }
};

Matrix floored_inverse(const Matrix& m, double floor) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.eigenvalues().minCoeff() < floor)
    throw SingularCovarianceError("floored_inverse: matrix near singular");
  return eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

// theta-difference increments with estimated covariances (no unlabeled data:
// everything comes from the online trace).
std::optional<IncrementEstimates> unknown_cov_increments(
    const std::vector<const DatasetRecord*>& explore, int d1,
    const UnknownCovState& state) {
  const int d2 = state.d2;
  const int K = state.K;
  const long m = static_cast<long>(explore.size()) / 2;
  if (m < 1 || state.contexts < 1) return std::nullopt;

  const Matrix sigma2 = state.sigma2_sum / double(state.contexts * K);
  Matrix r_dagger;
  try {
    r_dagger = floored_inverse(sigma2, 1e-10);
    if (d1 > 0) {
      const Matrix sigma1 = sigma2.topLeftCorner(d1, d1);
      r_dagger.topLeftCorner(d1, d1) -= floored_inverse(sigma1, 1e-10);
    }
  } catch (const SingularCovarianceError&) {
    return std::nullopt;
  }

  Vector mu = Vector::Zero(d2), mu_prime = Vector::Zero(d2);
  for (long i = 0; i < m; ++i)
    mu += explore[i]->reward *
          explore[i]->features.row(explore[i]->action - 1).transpose();
  for (long i = m; i < 2 * m; ++i)
    mu_prime += explore[i]->reward *
                explore[i]->features.row(explore[i]->action - 1).transpose();
  const Vector th = r_dagger * (mu / double(m));
  const Vector thp = r_dagger * (mu_prime / double(m));

  IncrementEstimates inc;
  inc.beta_hat = Matrix::Zero(K, K);
  int idx = 0;
  for (int a = 0; a < K; ++a)
    for (int b = a + 1; b < K; ++b, ++idx) {
      const Matrix pair = state.pair_sums[idx] / double(state.contexts);
      const double v = 0.5 * (th.dot(pair * thp) + thp.dot(pair * th));
      inc.beta_hat(a, b) = v;
      inc.beta_hat(b, a) = v;
    }
  return inc;
}

}  // namespace

RunTrace run_selector(const NestedInstance& nested,
                      const SelectorConfig& config, RngStream& rng) {
  RunTrace trace;
  if (config.T < 1) throw InvalidParameterError("run_selector: T must be >= 1");
  const BanditInstance& inst = nested.base;
  const int K = inst.K;
  const int d2 = inst.d;

  try {
    trace.v_star =
        oracle_v_star(inst, OracleMethod::MonteCarlo, config.v_star_mc).value;
    const CovarianceSet covs = true_covariances(inst);

    Exp4IX learner(nested.d1 > 0 ? nested.d1 : d2, K, config.exp4_policy_count,
                   config.exp4_gamma_scale,
                   derive_key(inst.rng_stream_id, "experts-f1"));
    int active_class = 1;

    Dataset explore_data;
    explore_data.d = d2;
    explore_data.K = K;
    explore_data.whitened = true;  // identity covariance frame
    UnknownCovState ucov;
    if (!config.known_cov) ucov.init(d2, K);

    double regret_cum = 0.0;
    double last_u = std::numeric_limits<double>::quiet_NaN();
    RngStream mc_rng = substream(inst.rng_stream_id, "selector-mc");

    for (int t = 1; t <= config.T; ++t) {
      const ScheduleValues sched = schedule(t, config, d2, K);
      const Matrix ctx = inst.sample_context(rng);
      const bool explore = rng.uniform() < sched.explore_prob;

      int action;
      if (explore) {
        action = 1 + rng.uniform_int(K);
      } else {
        action = learner.step(ctx, rng);
      }
      const double reward =
          inst.mean_reward(ctx, action) + inst.sample_noise(rng);

      if (explore) {
        DatasetRecord rec;
        rec.features = ctx;
        rec.action = action;
        rec.reward = reward;
        explore_data.records.push_back(std::move(rec));
      } else {
        learner.update(ctx, action, reward);
        if (!config.known_cov) ucov.add(ctx);
      }

      // Class-gap statistic from the exploration data.
      if (explore_data.size() >= 2 && t % config.u_stride == 0) {
        std::optional<IncrementEstimates> inc;
        if (config.known_cov) {
          inc = theta_diff_increments(explore_data, nested.d1, covs);
        } else {
          std::vector<const DatasetRecord*> ptrs;
          ptrs.reserve(explore_data.records.size());
          for (const auto& r : explore_data.records) ptrs.push_back(&r);
          inc = unknown_cov_increments(ptrs, nested.d1, ucov);
        }
        if (inc) {
          const PsdFitResult fit = psd_fit(*inc);
          if (config.closed_form_k2 && K == 2) {
            last_u = expected_max_closed_form_k2(fit.lambda);
          } else {
            last_u = expected_max(fit.lambda, config.n_mc, mc_rng).u_hat;
          }
          trace.u_hat_history.push_back({t, last_u, sched.alpha_t});
        }
      }

      RunTraceRow row;
      row.t = t;
      row.explored = explore;
      row.action = action;
      row.reward = reward;
      // Per-context regret against the full-class oracle policy; its mean
      // over contexts is V* minus the played policy's value.
      row.regret_inst =
          (ctx * inst.theta).maxCoeff() - inst.mean_reward(ctx, action);
      regret_cum += row.regret_inst;
      row.regret_cum = regret_cum;
      row.u_hat = last_u;
      row.alpha_t = sched.alpha_t;
      row.active_class = active_class;
      trace.rows.push_back(row);

      if (active_class == 1 && t >= sched.t_min && !std::isnan(last_u) &&
          last_u > 2.0 * sched.alpha_t) {
        active_class = 2;
        trace.switch_time = t;
        learner = Exp4IX(d2, K, config.exp4_policy_count,
                         config.exp4_gamma_scale,
                         derive_key(inst.rng_stream_id, "experts-f2"));
      }
    }
  } catch (const Error& e) {
    trace.failed = true;
    trace.failure = e.what();
  }
  return trace;
}

}  // namespace vstar
