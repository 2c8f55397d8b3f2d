#pragma once

#include <memory>
#include <vector>

#include "vstar/bandit.hpp"
#include "vstar/polynomial.hpp"

namespace vstar {

/// Provides the context-side expectations E_X prod_j <u_j, phi(X, a_j)>.
/// Implementations must be consistent with the whitened feature frame.
class MomentOracle {
 public:
  virtual ~MomentOracle() = default;

  /// E_X prod_j <u_j, phi(X, actions[j])>, actions 1-based.
  virtual double product_moment(const std::vector<Vector>& us,
                                const std::vector<int>& actions) const = 0;
  /// E_X phi(X, a).
  virtual Vector mean_feature(int a) const = 0;
  /// E_X phi(X, a) phi(X, b)^T.
  virtual Matrix cross_moment(int a, int b) const = 0;
  virtual int dim() const = 0;
};

/// Exact moments for the RademacherIID law (independent arms, identity
/// covariance): coordinate products survive only when every coordinate
/// appears an even number of times within each arm's independent vector.
/// Supports total order s <= 4.
class AnalyticRademacherOracle final : public MomentOracle {
 public:
  explicit AnalyticRademacherOracle(int d) : d_(d) {}
  double product_moment(const std::vector<Vector>& us,
                        const std::vector<int>& actions) const override;
  Vector mean_feature(int a) const override;
  Matrix cross_moment(int a, int b) const override;
  int dim() const override { return d_; }

 private:
  int d_;
};

/// Empirical moments over a pool of unlabeled contexts. Any order.
class UnlabeledPoolOracle final : public MomentOracle {
 public:
  explicit UnlabeledPoolOracle(std::vector<Matrix> pool);
  double product_moment(const std::vector<Vector>& us,
                        const std::vector<int>& actions) const override;
  Vector mean_feature(int a) const override;
  Matrix cross_moment(int a, int b) const override;
  int dim() const override { return d_; }
  int pool_size() const { return static_cast<int>(pool_.size()); }

 private:
  std::vector<Matrix> pool_;
  int d_ = 0;
  int K_ = 0;
};

struct MomentConfig {
  int degree = 2;              ///< t
  int q = 0;                   ///< chunk count; 0 derives ceil(48 log(1/delta))
  double delta = 0.05;
  long combo_cap = 20000;      ///< B: max combinations per alpha per chunk
};

/// Chunk count from the failure probability. Requires delta in (0, 1/e]
/// so the derived count is at least 48.
int derive_chunk_count(double delta);

/// Per-alpha chunk estimates and their medians, plus the assembled total.
struct MomentTable {
  std::vector<MultiIndex> alphas;
  std::vector<std::vector<double>> chunk_values;  // [alpha][chunk]
  std::vector<double> medians;                    // [alpha]
  double s_hat_n = 0.0;
};

/// Tuple of actions (1-based), with action a repeated alpha_a times,
/// ascending. Requires |alpha| >= 1.
std::vector<int> expand_action_list(const MultiIndex& alpha);

/// One ordered context moment through the oracle.
double context_moment(const MomentOracle& oracle,
                      const std::vector<Vector>& us,
                      const std::vector<int>& actions);

/// U-statistic average over s-combinations of the chunk, each evaluated as
/// the mean over the distinct arrangements of the action multiset (so the
/// full-enumeration estimator is invariant to record order). When the number
/// of combinations exceeds combo_cap, that many distinct combinations are
/// subsampled uniformly using `rng`.
double s_hat_chunk(const std::vector<Vector>& chunk_u, const MultiIndex& alpha,
                   const MomentOracle& oracle, long combo_cap, RngStream& rng);

/// Full estimator: chunk split, per-alpha medians, coefficient-weighted sum.
/// Requires a whitened dataset and n >= q * degree.
std::pair<double, MomentTable> estimate_v_star_moment(
    const Dataset& dataset, const Polynomial& poly, const MomentConfig& config,
    const MomentOracle& oracle, RngStream& rng);

enum class PluginKind { MinNormLS, Ridge };

/// Plug-in baseline: fit theta by regression on the chosen-action features,
/// then average max_a <phi(x, a), theta_hat> over the evaluation pool.
double plugin_baseline(const Dataset& dataset, PluginKind kind, double lambda,
                       const std::vector<Matrix>& eval_contexts);

}  // namespace vstar
