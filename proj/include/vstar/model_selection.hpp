#pragma once

#include <optional>
#include <string>

#include "vstar/bandit.hpp"
#include "vstar/gp_upper.hpp"

namespace vstar {

/// Two nested linear classes over one instance: the smaller class sees the
/// first d1 feature coordinates, the full class all d2 of them.
struct NestedInstance {
  BanditInstance base;  // NestedPair law with dimension d2
  int d1 = 0;
  bool realizable_in_f1 = false;
};

NestedInstance make_nested(int d1, int d2, int K, bool realizable,
                           double head_norm, double tail_norm,
                           std::uint64_t seed);

struct SelectorConfig {
  int T = 3000;
  double delta = 0.01;
  double C0 = 1.0;
  double C1 = 0.0065;  // pilot-calibrated so the d2=50 gap instance is separable
  double C2 = 0.05;
  bool known_cov = true;
  int exp4_policy_count = 256;
  double exp4_gamma_scale = 4.0;
  int n_mc = 100000;
  int u_stride = 1;          ///< recompute the test statistic every u_stride rounds
  double tau = 1.0;          ///< sub-Gaussian scale entering the unknown-cov t_min
  double rho = 1.0;          ///< covariance floor entering the unknown-cov t_min
  bool closed_form_k2 = true;
  int v_star_mc = 200000;    ///< samples for the regret reference value
};

struct ScheduleValues {
  double explore_prob = 0.0;
  int t_min = 0;
  double alpha_t = 0.0;
};

/// Exploration probability t^{-1/3} plus the branch-dependent test
/// threshold alpha_t and warm-up time t_min.
ScheduleValues schedule(int t, const SelectorConfig& config, int d2, int K);

/// Exponential weights over a finite set of linear argmax experts with
/// implicit-exploration loss estimates. Losses are 1 - reward after affine
/// rescaling by a running reward range with a 10% margin.
class Exp4IX {
 public:
  /// Experts: `policy_count` directions uniform on the unit sphere of
  /// `dim`, plus the normalized all-ones direction.
  Exp4IX(int dim, int K, int policy_count, double gamma_scale,
         std::uint64_t expert_seed);

  /// Samples an action (1-based) from the current expert mixture.
  int step(const Matrix& context, RngStream& rng) const;
  /// Exponential-weights update from one observed (context, action, reward).
  void update(const Matrix& context, int action, double reward);

  int expert_count() const { return static_cast<int>(weights_.size()); }
  double weight(int e) const { return weights_[e]; }
  /// Mixture probability of each action under the current weights.
  Vector action_distribution(const Matrix& context) const;

 private:
  std::vector<int> advice(const Matrix& context) const;

  Matrix experts_;  // M x dim
  Vector weights_;
  int dim_ = 0;
  int K_ = 0;
  double gamma_scale_ = 1.0;
  long updates_ = 0;
  double reward_lo_ = 0.0;
  double reward_hi_ = 0.0;
  bool range_init_ = false;
};

struct RunTraceRow {
  int t = 0;
  bool explored = false;
  int action = 0;
  double reward = 0.0;
  double regret_inst = 0.0;
  double regret_cum = 0.0;
  double u_hat = std::numeric_limits<double>::quiet_NaN();
  double alpha_t = 0.0;
  int active_class = 1;
};

struct UStatPoint {
  int t = 0;
  double u_hat = 0.0;
  double alpha_t = 0.0;
};

struct RunTrace {
  std::vector<RunTraceRow> rows;
  std::optional<int> switch_time;
  std::vector<UStatPoint> u_hat_history;
  double v_star = 0.0;
  bool failed = false;
  std::string failure;
};

/// Online model-selection loop: interleaves uniform exploration with the
/// active Exp4-IX learner, recomputes the class-gap statistic from the
/// exploration data, and switches to the full class at most once.
RunTrace run_selector(const NestedInstance& nested, const SelectorConfig& config,
                      RngStream& rng);

}  // namespace vstar
