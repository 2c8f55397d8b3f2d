#include "vstar/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace vstar {

namespace {

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

Vector sample_unit_ball(int d, RngStream& rng) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.gaussian();
  const double norm = v.norm();
  if (norm == 0.0) return Vector::Zero(d);
  const double radius = std::pow(rng.uniform(), 1.0 / d);
  return v * (radius / norm);
}

Vector sample_sphere(int d, RngStream& rng) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.gaussian();
  const double norm = v.norm();
  return norm == 0.0 ? Vector::Unit(d, 0) : Vector(v / norm);
}

std::vector<int> all_actions(int K) {
  std::vector<int> a(K);
  std::iota(a.begin(), a.end(), 1);
  return a;
}

// Expected max of K iid standard normals, for the registered closed forms.
std::optional<double> iid_gaussian_max_mean(int K) {
  switch (K) {
    case 1:
      return 0.0;
    case 2:
      return 1.0 / std::sqrt(M_PI);
    case 3:
      return 1.5 / std::sqrt(M_PI);
    default:
      return std::nullopt;
  }
}

}  // namespace

Matrix BanditInstance::sample_context(RngStream& rng) const {
  Matrix ctx(K, d);
  switch (law) {
    case FeatureLawKind::RademacherIID:
    case FeatureLawKind::NestedPair:
      for (int a = 0; a < K; ++a)
        for (int j = 0; j < d; ++j) ctx(a, j) = rng.rademacher();
      break;
    case FeatureLawKind::GaussianIdentity:
      for (int a = 0; a < K; ++a)
        for (int j = 0; j < d; ++j) ctx(a, j) = rng.gaussian();
      break;
    case FeatureLawKind::SparseBinary:
      for (int j = 0; j < d; ++j) ctx(0, j) = rng.rademacher();
      ctx.row(1) = -ctx.row(0);
      break;
    case FeatureLawKind::TruncationCoupling:
      for (int j = 0; j < d; ++j) {
        const double x = rng.gaussian();
        ctx(0, j) = x;
        ctx(1, j) = std::abs(x) <= params.c_trunc ? x : -x;
      }
      break;
    case FeatureLawKind::TreatmentSplit: {
      ctx.setZero();
      const int half = d / 2;
      // Base arms after the control read all coordinates.
      for (int a = 1; a < params.a1_size; ++a)
        for (int j = 0; j < d; ++j) ctx(a, j) = rng.rademacher();
      // Ambitious arms read the front half; the back half defaults to zero.
      for (int a = params.a1_size; a < K; ++a) {
        for (int j = 0; j < half; ++j) ctx(a, j) = rng.rademacher();
        if (params.a2_rademacher_fill)
          for (int j = half; j < d; ++j) ctx(a, j) = rng.rademacher();
      }
      break;
    }
  }
  return ctx;
}

double BanditInstance::sample_noise(RngStream& rng) const {
  switch (params.noise_law) {
    case NoiseLaw::UniformHalf:
      return rng.uniform(-0.5, 0.5);
    case NoiseLaw::Gaussian:
      return params.noise_sigma * rng.gaussian();
    case NoiseLaw::None:
      return 0.0;
  }
  return 0.0;
}

double BanditInstance::mean_reward(const Matrix& context, int a) const {
  return context.row(a - 1).dot(theta);
}

BanditInstance make_instance(FeatureLawKind kind, int d, int K,
                             const LawParams& params, std::uint64_t seed) {
  if (d < 1) throw InvalidParameterError("make_instance: d must be >= 1");
  if (K < 1) throw InvalidParameterError("make_instance: K must be positive");

  BanditInstance inst;
  inst.d = d;
  inst.K = K;
  inst.law = kind;
  inst.params = params;
  inst.rng_stream_id = seed;
  inst.logging_actions = all_actions(K);

  switch (kind) {
    case FeatureLawKind::SparseBinary:
      if (K != 2)
        throw InvalidParameterError("SparseBinary requires K = 2");
      if (params.omega == 0.0)
        throw InvalidParameterError("SparseBinary requires omega != 0");
      if (params.i_star < 0 || params.i_star >= d)
        throw InvalidParameterError("SparseBinary: i_star out of range");
      break;
    case FeatureLawKind::TruncationCoupling:
      if (K != 2)
        throw InvalidParameterError("TruncationCoupling requires K = 2");
      if (params.c_trunc <= 0.0)
        throw InvalidParameterError("TruncationCoupling requires c_trunc > 0");
      break;
    case FeatureLawKind::NestedPair:
      if (params.d1 < 0 || params.d1 >= d)
        throw InvalidParameterError("NestedPair requires 0 <= d1 < d");
      break;
    case FeatureLawKind::TreatmentSplit: {
      if (params.a1_size < 2 || params.a2_size < 2)
        throw InvalidParameterError(
            "TreatmentSplit requires |A1| >= 2 and |A2| >= 2");
      const int expected_K = params.a1_size + params.a2_size - 1;
      if (K != expected_K)
        throw InvalidParameterError(
            "TreatmentSplit: K must equal |A1| + |A2| - 1");
      inst.logging_actions = all_actions(params.a1_size);
      inst.ambitious_actions.push_back(1);  // shared control
      for (int a = params.a1_size + 1; a <= K; ++a)
        inst.ambitious_actions.push_back(a);
      break;
    }
    default:
      break;
  }

  if (params.theta.has_value()) {
    if (params.theta->size() != d)
      throw InvalidParameterError("make_instance: theta has wrong length");
    inst.theta = *params.theta;
    return inst;
  }

  RngStream theta_rng = substream(seed, "theta");
  switch (kind) {
    case FeatureLawKind::SparseBinary:
      inst.theta = Vector::Zero(d);
      inst.theta[params.i_star] = params.omega;
      break;
    case FeatureLawKind::NestedPair: {
      inst.theta = Vector::Zero(d);
      if (params.d1 > 0 && params.head_norm != 0.0)
        inst.theta.head(params.d1) =
            params.head_norm * sample_sphere(params.d1, theta_rng);
      if (params.tail_norm != 0.0)
        inst.theta.tail(d - params.d1) =
            params.tail_norm * sample_sphere(d - params.d1, theta_rng);
      break;
    }
    case FeatureLawKind::TreatmentSplit:
      inst.theta = sample_unit_ball(d, theta_rng);
      if (params.no_effect) inst.theta.head(d / 2).setZero();
      break;
    default:
      inst.theta = sample_unit_ball(d, theta_rng);
      break;
  }
  return inst;
}

Dataset collect_uniform(const BanditInstance& instance, int n,
                        RngStream& rng) {
  if (n < 1) throw InvalidParameterError("collect_uniform: n must be >= 1");
  Dataset data;
  data.d = instance.d;
  data.K = instance.K;
  data.records.reserve(n);
  const auto& actions = instance.logging_actions;
  for (int i = 0; i < n; ++i) {
    DatasetRecord rec;
    rec.features = instance.sample_context(rng);
    rec.action = actions[rng.uniform_int(static_cast<int>(actions.size()))];
    rec.reward = instance.mean_reward(rec.features, rec.action) +
                 instance.sample_noise(rng);
    data.records.push_back(std::move(rec));
  }
  return data;
}

std::vector<Matrix> collect_unlabeled(const BanditInstance& instance, int p,
                                      RngStream& rng) {
  if (p < 1) throw InvalidParameterError("collect_unlabeled: p must be >= 1");
  std::vector<Matrix> pool;
  pool.reserve(p);
  for (int i = 0; i < p; ++i) pool.push_back(instance.sample_context(rng));
  return pool;
}

CovarianceSet true_covariances(const BanditInstance& instance) {
  const int d = instance.d;
  const int K = instance.K;
  CovarianceSet covs;
  covs.source = CovarianceSource::Analytic;
  covs.sigma_a.assign(K, Matrix::Identity(d, d));
  covs.sigma_pair.assign(K, std::vector<Matrix>(K, Matrix::Zero(d, d)));

  switch (instance.law) {
    case FeatureLawKind::RademacherIID:
    case FeatureLawKind::GaussianIdentity:
    case FeatureLawKind::NestedPair:
      for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b)
          if (a != b) covs.sigma_pair[a][b] = 2.0 * Matrix::Identity(d, d);
      covs.sigma_avg = Matrix::Identity(d, d);
      break;
    case FeatureLawKind::SparseBinary:
      covs.sigma_pair[0][1] = covs.sigma_pair[1][0] =
          4.0 * Matrix::Identity(d, d);
      covs.sigma_avg = Matrix::Identity(d, d);
      break;
    case FeatureLawKind::TruncationCoupling: {
      // E (X - X')^2 per coordinate equals 4 E[X^2; |X| > c].
      const double c = instance.params.c_trunc;
      const double tail2 = 2.0 * (c * normal_pdf(c) + 1.0 - normal_cdf(c));
      covs.sigma_pair[0][1] = covs.sigma_pair[1][0] =
          4.0 * tail2 * Matrix::Identity(d, d);
      covs.sigma_avg = Matrix::Identity(d, d);
      break;
    }
    case FeatureLawKind::TreatmentSplit: {
      if (instance.params.a2_rademacher_fill)
        throw UnsupportedError(
            "true_covariances: no closed form registered for the "
            "Rademacher-filled TreatmentSplit variant");
      const int half = d / 2;
      Matrix half_id = Matrix::Zero(d, d);
      half_id.topLeftCorner(half, half) = Matrix::Identity(half, half);
      covs.sigma_a[0].setZero();
      for (int a = instance.params.a1_size; a < K; ++a)
        covs.sigma_a[a] = half_id;
      // Arms are mutually independent, so increments add.
      for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b)
          if (a != b) covs.sigma_pair[a][b] = covs.sigma_a[a] + covs.sigma_a[b];
      Matrix avg = Matrix::Zero(d, d);
      for (int a : instance.logging_actions) avg += covs.sigma_a[a - 1];
      covs.sigma_avg = avg / double(instance.logging_actions.size());
      break;
    }
  }
  return covs;
}

CovarianceSet estimate_covariances(const std::vector<Matrix>& pool,
                                   const std::vector<int>& avg_actions,
                                   const std::vector<int>& pair_actions) {
  if (pool.empty())
    throw InvalidParameterError("estimate_covariances: empty pool");
  const int K = static_cast<int>(pool.front().rows());
  const int d = static_cast<int>(pool.front().cols());
  const int p = static_cast<int>(pool.size());

  std::vector<int> avg = avg_actions.empty() ? all_actions(K) : avg_actions;
  std::vector<int> pairs = pair_actions.empty() ? all_actions(K) : pair_actions;

  // Stack each action's pool features as a p x d matrix once.
  std::vector<Matrix> stacked(K);
  std::vector<bool> needed(K, false);
  for (int a : avg) needed.at(a - 1) = true;
  for (int a : pairs) needed.at(a - 1) = true;
  for (int a = 0; a < K; ++a) {
    if (!needed[a]) continue;
    stacked[a].resize(p, d);
    for (int i = 0; i < p; ++i) stacked[a].row(i) = pool[i].row(a);
  }

  auto symmetrize = [](Matrix& m) { m = ((m + m.transpose()) * 0.5).eval(); };

  CovarianceSet covs;
  covs.source = CovarianceSource::EstimatedFromUnlabeled;
  covs.pool_size = p;
  covs.sigma_a.assign(K, Matrix::Zero(d, d));
  covs.sigma_pair.assign(K, std::vector<Matrix>(K, Matrix::Zero(d, d)));

  for (int a : pairs) {
    covs.sigma_a[a - 1] =
        (stacked[a - 1].transpose() * stacked[a - 1]) / double(p);
    symmetrize(covs.sigma_a[a - 1]);
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const int a = pairs[i] - 1;
      const int b = pairs[j] - 1;
      Matrix diff = stacked[a] - stacked[b];
      Matrix s = (diff.transpose() * diff) / double(p);
      symmetrize(s);
      covs.sigma_pair[a][b] = s;
      covs.sigma_pair[b][a] = s;
    }
  }
  Matrix acc = Matrix::Zero(d, d);
  for (int a : avg)
    acc += (stacked[a - 1].transpose() * stacked[a - 1]) / double(p);
  covs.sigma_avg = acc / double(avg.size());
  symmetrize(covs.sigma_avg);
  return covs;
}

Matrix sym_inv_sqrt(const Matrix& spd, double eig_floor) {
  if (spd.rows() != spd.cols())
    throw DimensionMismatchError("sym_inv_sqrt: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(spd);
  if (eig.info() != Eigen::Success)
    throw SolverFailureError("sym_inv_sqrt: eigendecomposition failed");
  const Vector& evals = eig.eigenvalues();
  if (evals.minCoeff() < eig_floor)
    throw SingularCovarianceError(
        "sym_inv_sqrt: eigenvalue " + std::to_string(evals.minCoeff()) +
        " below floor " + std::to_string(eig_floor));
  Vector inv_sqrt = evals.array().rsqrt();
  return eig.eigenvectors() * inv_sqrt.asDiagonal() *
         eig.eigenvectors().transpose();
}

Dataset whiten(const Dataset& dataset, const Matrix& sigma_avg,
               double eig_floor) {
  const Matrix w = sym_inv_sqrt(sigma_avg, eig_floor);
  Dataset out = dataset;
  for (auto& rec : out.records) rec.features = rec.features * w.transpose();
  out.whitened = true;
  return out;
}

CovarianceSet whiten(const CovarianceSet& covs, const Matrix& sigma_avg,
                     double eig_floor) {
  const Matrix w = sym_inv_sqrt(sigma_avg, eig_floor);
  CovarianceSet out = covs;
  out.sigma_avg = w * covs.sigma_avg * w;
  for (auto& m : out.sigma_a) m = w * m * w;
  for (auto& row : out.sigma_pair)
    for (auto& m : row) m = w * m * w;
  return out;
}

namespace {

// Enumerates E max_a <phi(X,a), theta> exactly over the joint sign patterns
// of the coordinates that carry nonzero theta mass.
OracleValue enumerate_v_star(const BanditInstance& inst) {
  std::vector<int> support;
  for (int j = 0; j < inst.d; ++j)
    if (inst.theta[j] != 0.0) support.push_back(j);
  const int nz = static_cast<int>(support.size());
  if (nz == 0) return {0.0, 0.0};

  int draws_per_context = 0;  // independent sign vectors per context
  switch (inst.law) {
    case FeatureLawKind::RademacherIID:
    case FeatureLawKind::NestedPair:
      draws_per_context = inst.K;
      break;
    case FeatureLawKind::SparseBinary:
      draws_per_context = 1;  // second arm is the mirrored first arm
      break;
    default:
      throw UnsupportedError(
          "oracle_v_star: enumeration supports Rademacher-type laws only");
  }
  const int bits = nz * draws_per_context;
  if (bits > 24)
    throw CapacityError("oracle_v_star: enumeration space exceeds 2^24");

  const std::uint64_t total = 1ULL << bits;
  double sum = 0.0;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < inst.K; ++a) {
      const int draw = (inst.law == FeatureLawKind::SparseBinary) ? 0 : a;
      const double flip =
          (inst.law == FeatureLawKind::SparseBinary && a == 1) ? -1.0 : 1.0;
      double z = 0.0;
      for (int b = 0; b < nz; ++b) {
        const bool neg = (mask >> (draw * nz + b)) & 1ULL;
        z += (neg ? -1.0 : 1.0) * inst.theta[support[b]];
      }
      best = std::max(best, flip * z);
    }
    sum += best;
  }
  return {sum / double(total), 0.0};
}

std::optional<double> closed_form_v_star(const BanditInstance& inst) {
  if (inst.theta.norm() == 0.0) return 0.0;
  switch (inst.law) {
    case FeatureLawKind::GaussianIdentity: {
      // iid N(0, ||theta||^2) arm values.
      if (auto m = iid_gaussian_max_mean(inst.K))
        return inst.theta.norm() * *m;
      return std::nullopt;
    }
    case FeatureLawKind::RademacherIID: {
      // Registered for 1-sparse theta: arm values are iid +-|w|.
      int nz = 0;
      double w = 0.0;
      for (int j = 0; j < inst.d; ++j)
        if (inst.theta[j] != 0.0) {
          ++nz;
          w = std::abs(inst.theta[j]);
        }
      if (nz != 1) return std::nullopt;
      return w * (1.0 - std::pow(2.0, 1.0 - inst.K));
    }
    case FeatureLawKind::SparseBinary:
      // max(z, -z) = |z| = |omega| on every context.
      return std::abs(inst.params.omega);
    default:
      return std::nullopt;
  }
}

}  // namespace

OracleValue oracle_v_star(const BanditInstance& instance, OracleMethod method,
                          int mc_samples) {
  switch (method) {
    case OracleMethod::MonteCarlo: {
      if (mc_samples < 1)
        throw InvalidParameterError("oracle_v_star: mc_samples must be >= 1");
      RngStream rng = substream(instance.rng_stream_id, "oracle-mc");
      double sum = 0.0, sumsq = 0.0;
      for (int i = 0; i < mc_samples; ++i) {
        const Matrix ctx = instance.sample_context(rng);
        const double v = (ctx * instance.theta).maxCoeff();
        sum += v;
        sumsq += v * v;
      }
      const double mean = sum / mc_samples;
      const double var =
          std::max(0.0, (sumsq - mc_samples * mean * mean) /
                            std::max(1, mc_samples - 1));
      return {mean, std::sqrt(var / mc_samples)};
    }
    case OracleMethod::ClosedForm: {
      if (auto v = closed_form_v_star(instance)) return {*v, 0.0};
      throw UnsupportedError(
          "oracle_v_star: no closed form registered for this instance");
    }
    case OracleMethod::Enumerate: {
      if (instance.d > 20)
        throw InvalidParameterError(
            "oracle_v_star: enumeration requires d <= 20");
      return enumerate_v_star(instance);
    }
  }
  throw UnsupportedError("oracle_v_star: unknown method");
}

}  // namespace vstar
