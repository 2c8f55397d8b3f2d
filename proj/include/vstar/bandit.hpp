#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "vstar/errors.hpp"
#include "vstar/rng.hpp"

namespace vstar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Built-in synthetic feature laws. All of them have zero-mean features per
/// action; second moments are available in closed form via true_covariances.
enum class FeatureLawKind {
  RademacherIID,       ///< iid uniform {-1,+1} coordinates, arms independent
  GaussianIdentity,    ///< iid standard normal coordinates, arms independent
  SparseBinary,        ///< K=2 sign-paired Rademacher arms, 1-sparse theta
  TruncationCoupling,  ///< K=2 Gaussian arms coupled by a hard truncation flip
  NestedPair,          ///< RademacherIID with a designated prefix sub-class
  TreatmentSplit,      ///< control action + base arms + half-support arms
};

enum class NoiseLaw {
  UniformHalf,  ///< uniform on [-1/2, 1/2]
  Gaussian,     ///< N(0, noise_sigma^2)
  None,
};

struct LawParams {
  // SparseBinary
  int i_star = 0;      // 0-based coordinate index
  double omega = 1.0;  // value of theta at i_star; must be nonzero
  // TruncationCoupling
  double c_trunc = 1.0;
  // NestedPair: prefix dimension of the smaller class, plus norms of the
  // prefix/suffix blocks of theta used when no explicit theta is given.
  int d1 = 0;
  double head_norm = 0.5;
  double tail_norm = 0.0;
  // TreatmentSplit
  int a1_size = 3;
  int a2_size = 2;
  bool no_effect = false;           // zero the first d/2 coordinates of theta
  bool a2_rademacher_fill = false;  // fill the back half of ambitious arms
  // Optional explicit parameter vector (overrides the recipe above).
  std::optional<Vector> theta;

  NoiseLaw noise_law = NoiseLaw::UniformHalf;
  double noise_sigma = 0.0;  // Gaussian std when noise_law == Gaussian
};

/// A fully specified synthetic linear contextual bandit instance.
/// Immutable after construction; all sampling goes through caller-provided
/// streams so instances are safe to share across threads.
struct BanditInstance {
  int d = 0;
  int K = 0;
  Vector theta;
  FeatureLawKind law = FeatureLawKind::RademacherIID;
  LawParams params;
  std::uint64_t rng_stream_id = 0;

  /// Actions (1-based) the uniform logging policy draws from. All actions
  /// except for TreatmentSplit, where it is the base set A1.
  std::vector<int> logging_actions;
  /// Ambitious action set A2 for TreatmentSplit (contains the control).
  std::vector<int> ambitious_actions;

  /// Draws one context as a K x d matrix; row a-1 holds phi(x, a).
  Matrix sample_context(RngStream& rng) const;
  double sample_noise(RngStream& rng) const;
  /// Mean reward of action a (1-based) at the given context.
  double mean_reward(const Matrix& context, int a) const;
};

struct DatasetRecord {
  Matrix features;  // K x d; row a-1 = phi(x, a)
  int action = 0;   // 1-based
  double reward = 0.0;
};

struct Dataset {
  int d = 0;
  int K = 0;
  std::vector<DatasetRecord> records;
  bool whitened = false;

  int size() const { return static_cast<int>(records.size()); }
  /// Feature row of the chosen action for record i.
  Vector chosen_features(int i) const {
    return records[i].features.row(records[i].action - 1).transpose();
  }
};

enum class CovarianceSource { Analytic, EstimatedFromUnlabeled };

/// Second-moment structure of an instance: per-action covariances, pairwise
/// increment covariances, and the policy-average covariance.
struct CovarianceSet {
  Matrix sigma_avg;
  std::vector<Matrix> sigma_a;                  // K entries
  std::vector<std::vector<Matrix>> sigma_pair;  // K x K; diagonal unused
  CovarianceSource source = CovarianceSource::Analytic;
  int pool_size = 0;

  int dim() const { return static_cast<int>(sigma_avg.rows()); }
  int actions() const { return static_cast<int>(sigma_a.size()); }
};

BanditInstance make_instance(FeatureLawKind kind, int d, int K,
                             const LawParams& params, std::uint64_t seed);

/// Logs n records under the uniform policy over the instance's logging set.
Dataset collect_uniform(const BanditInstance& instance, int n, RngStream& rng);

/// Draws p unlabeled contexts (no actions, no rewards).
std::vector<Matrix> collect_unlabeled(const BanditInstance& instance, int p,
                                      RngStream& rng);

/// Closed-form covariances for built-in laws.
CovarianceSet true_covariances(const BanditInstance& instance);

/// Empirical covariances from an unlabeled pool. sigma_a and sigma_pair are
/// computed for `pair_actions` (1-based; empty means all), sigma_avg averages
/// over `avg_actions` (empty means all). Symmetry is enforced explicitly.
CovarianceSet estimate_covariances(const std::vector<Matrix>& pool,
                                   const std::vector<int>& avg_actions = {},
                                   const std::vector<int>& pair_actions = {});

/// Symmetric inverse square root via eigendecomposition.
/// Throws SingularCovarianceError when lambda_min falls below the floor.
Matrix sym_inv_sqrt(const Matrix& spd, double eig_floor = 1e-10);

/// Maps every feature row through sigma_avg^{-1/2}.
Dataset whiten(const Dataset& dataset, const Matrix& sigma_avg,
               double eig_floor = 1e-10);
/// Conjugates every stored covariance by sigma_avg^{-1/2} on both sides.
CovarianceSet whiten(const CovarianceSet& covs, const Matrix& sigma_avg,
                     double eig_floor = 1e-10);

enum class OracleMethod { MonteCarlo, ClosedForm, Enumerate };

struct OracleValue {
  double value = 0.0;
  double stderr = 0.0;
};

/// Ground-truth optimal value E_X max_a <phi(X,a), theta>. MonteCarlo uses a
/// dedicated substream of the instance seed, so repeated calls agree exactly.
OracleValue oracle_v_star(const BanditInstance& instance, OracleMethod method,
                          int mc_samples = 1000000);

}  // namespace vstar
