#include "vstar/moment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace vstar {

namespace {

// Groups positions by action; returns (action, positions) pairs.
std::vector<std::pair<int, std::vector<int>>> group_by_action(
    const std::vector<int>& actions) {
  std::vector<std::pair<int, std::vector<int>>> groups;
  for (int j = 0; j < static_cast<int>(actions.size()); ++j) {
    if (!groups.empty() && groups.back().first == actions[j]) {
      groups.back().second.push_back(j);
    } else {
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const auto& g) { return g.first == actions[j]; });
      if (it == groups.end())
        groups.push_back({actions[j], {j}});
      else
        it->second.push_back(j);
    }
  }
  return groups;
}

double binom_exceeds(long m, int s, long cap) {
  // Returns C(m, s) capped at cap + 1 to avoid overflow.
  double v = 1.0;
  for (int i = 0; i < s; ++i) {
    v *= double(m - i) / double(i + 1);
    if (v > double(cap)) return double(cap) + 1.0;
  }
  return v;
}

}  // namespace

double AnalyticRademacherOracle::product_moment(
    const std::vector<Vector>& us, const std::vector<int>& actions) const {
  const int s = static_cast<int>(actions.size());
  if (s != static_cast<int>(us.size()))
    throw DimensionMismatchError("product_moment: arity mismatch");
  if (s > 4)
    throw UnsupportedError(
        "AnalyticRademacherOracle supports orders up to 4, got s = " +
        std::to_string(s));
  double value = 1.0;
  for (const auto& [action, pos] : group_by_action(actions)) {
    (void)action;
    switch (pos.size()) {
      case 1:
      case 3:
        return 0.0;  // odd moments of symmetric coordinates vanish
      case 2:
        value *= us[pos[0]].dot(us[pos[1]]);
        break;
      case 4: {
        const Vector& a = us[pos[0]];
        const Vector& b = us[pos[1]];
        const Vector& c = us[pos[2]];
        const Vector& e = us[pos[3]];
        const double pairings = a.dot(b) * c.dot(e) + a.dot(c) * b.dot(e) +
                                a.dot(e) * b.dot(c);
        // +-1 coordinates have fourth moment 1, not 3.
        const double diag =
            (a.array() * b.array() * c.array() * e.array()).sum();
        value *= pairings - 2.0 * diag;
        break;
      }
      default:
        return 0.0;
    }
    if (value == 0.0) return 0.0;
  }
  return value;
}

Vector AnalyticRademacherOracle::mean_feature(int) const {
  return Vector::Zero(d_);
}

Matrix AnalyticRademacherOracle::cross_moment(int a, int b) const {
  if (a == b) return Matrix::Identity(d_, d_);
  return Matrix::Zero(d_, d_);
}

UnlabeledPoolOracle::UnlabeledPoolOracle(std::vector<Matrix> pool)
    : pool_(std::move(pool)) {
  if (pool_.empty())
    throw InvalidParameterError("UnlabeledPoolOracle: empty pool");
  K_ = static_cast<int>(pool_.front().rows());
  d_ = static_cast<int>(pool_.front().cols());
}

double UnlabeledPoolOracle::product_moment(
    const std::vector<Vector>& us, const std::vector<int>& actions) const {
  const int s = static_cast<int>(actions.size());
  if (s != static_cast<int>(us.size()))
    throw DimensionMismatchError("product_moment: arity mismatch");
  double sum = 0.0;
  for (const Matrix& ctx : pool_) {
    double prod = 1.0;
    for (int j = 0; j < s; ++j) prod *= ctx.row(actions[j] - 1).dot(us[j]);
    sum += prod;
  }
  return sum / double(pool_.size());
}

Vector UnlabeledPoolOracle::mean_feature(int a) const {
  Vector mean = Vector::Zero(d_);
  for (const Matrix& ctx : pool_) mean += ctx.row(a - 1).transpose();
  return mean / double(pool_.size());
}

Matrix UnlabeledPoolOracle::cross_moment(int a, int b) const {
  Matrix m = Matrix::Zero(d_, d_);
  for (const Matrix& ctx : pool_)
    m += ctx.row(a - 1).transpose() * ctx.row(b - 1);
  return m / double(pool_.size());
}

int derive_chunk_count(double delta) {
  if (delta <= 0.0 || delta > std::exp(-1.0))
    throw InvalidParameterError(
        "derive_chunk_count: delta must lie in (0, 1/e]");
  return static_cast<int>(std::ceil(48.0 * std::log(1.0 / delta)));
}

std::vector<int> expand_action_list(const MultiIndex& alpha) {
  if (alpha.order() < 1)
    throw InvalidParameterError("expand_action_list: |alpha| must be >= 1");
  std::vector<int> actions;
  actions.reserve(alpha.order());
  for (int a = 0; a < alpha.vars(); ++a)
    for (int r = 0; r < alpha.alpha[a]; ++r) actions.push_back(a + 1);
  return actions;
}

double context_moment(const MomentOracle& oracle,
                      const std::vector<Vector>& us,
                      const std::vector<int>& actions) {
  return oracle.product_moment(us, actions);
}

double s_hat_chunk(const std::vector<Vector>& chunk_u, const MultiIndex& alpha,
                   const MomentOracle& oracle, long combo_cap,
                   RngStream& rng) {
  const int s = alpha.order();
  const int m = static_cast<int>(chunk_u.size());
  if (s < 1) throw InvalidParameterError("s_hat_chunk: |alpha| must be >= 1");
  if (m < s)
    throw InsufficientDataError("s_hat_chunk: chunk of size " +
                                std::to_string(m) + " cannot form order-" +
                                std::to_string(s) + " combinations");
  if (combo_cap < 1)
    throw InvalidParameterError("s_hat_chunk: combo_cap must be >= 1");

  const std::vector<int> base_actions = expand_action_list(alpha);

  // Fast path for s <= 2 through the oracle's low-order moments; the pair
  // matrix is symmetrized so each unordered combination is evaluated as the
  // mean over both arrangements.
  if (s == 1) {
    const Vector mean = oracle.mean_feature(base_actions[0]);
    double sum = 0.0;
    for (const Vector& u : chunk_u) sum += u.dot(mean);
    return sum / double(m);
  }

  const bool enumerate_all = binom_exceeds(m, s, combo_cap) <= double(combo_cap);

  if (s == 2) {
    const Matrix cross =
        oracle.cross_moment(base_actions[0], base_actions[1]);
    const Matrix sym = 0.5 * (cross + cross.transpose());
    Matrix stacked(oracle.dim(), m);
    for (int i = 0; i < m; ++i) stacked.col(i) = chunk_u[i];
    const Matrix mapped = sym * stacked;
    if (enumerate_all) {
      double sum = 0.0;
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) sum += stacked.col(i).dot(mapped.col(j));
      return sum / (0.5 * double(m) * double(m - 1));
    }
    std::set<std::pair<int, int>> seen;
    double sum = 0.0;
    long taken = 0;
    while (taken < combo_cap) {
      int i = rng.uniform_int(m);
      int j = rng.uniform_int(m);
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      if (!seen.insert({i, j}).second) continue;
      sum += stacked.col(i).dot(mapped.col(j));
      ++taken;
    }
    return sum / double(taken);
  }

  // General path: enumerate or subsample combinations; evaluate each one as
  // the mean over distinct arrangements of the action multiset.
  std::vector<std::vector<int>> perms;
  {
    std::vector<int> arrangement = base_actions;
    do {
      perms.push_back(arrangement);
    } while (std::next_permutation(arrangement.begin(), arrangement.end()));
  }

  auto eval_combo = [&](const std::vector<int>& idx) {
    std::vector<Vector> us;
    us.reserve(s);
    for (int i : idx) us.push_back(chunk_u[i]);
    double acc = 0.0;
    for (const auto& actions : perms)
      acc += oracle.product_moment(us, actions);
    return acc / double(perms.size());
  };

  double sum = 0.0;
  long count = 0;
  if (enumerate_all) {
    std::vector<int> idx(s);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
      sum += eval_combo(idx);
      ++count;
      int pos = s - 1;
      while (pos >= 0 && idx[pos] == m - s + pos) --pos;
      if (pos < 0) break;
      ++idx[pos];
      for (int k = pos + 1; k < s; ++k) idx[k] = idx[k - 1] + 1;
    }
  } else {
    std::set<std::vector<int>> seen;
    while (count < combo_cap) {
      std::set<int> pick;
      while (static_cast<int>(pick.size()) < s) pick.insert(rng.uniform_int(m));
      std::vector<int> idx(pick.begin(), pick.end());
      if (!seen.insert(idx).second) continue;
      sum += eval_combo(idx);
      ++count;
    }
  }
  return sum / double(count);
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::pair<double, MomentTable> estimate_v_star_moment(
    const Dataset& dataset, const Polynomial& poly, const MomentConfig& config,
    const MomentOracle& oracle, RngStream& rng) {
  if (!dataset.whitened)
    throw InvalidParameterError(
        "estimate_v_star_moment: dataset must be whitened first");
  const int n = dataset.size();
  const int q = config.q > 0 ? config.q : derive_chunk_count(config.delta);
  const int t = config.degree;
  if (n < q * std::max(1, t))
    throw InsufficientDataError("estimate_v_star_moment: need n >= q*t = " +
                                std::to_string(q * std::max(1, t)) +
                                ", got n = " + std::to_string(n));
  const int m = n / q;

  std::vector<Vector> u;
  u.reserve(n);
  for (int i = 0; i < n; ++i)
    u.push_back(dataset.records[i].reward * dataset.chosen_features(i));

  MomentTable table;
  table.alphas = enumerate_multi_indices(dataset.K, t);
  table.chunk_values.resize(table.alphas.size());
  table.medians.resize(table.alphas.size());

  double total = 0.0;
  for (std::size_t ai = 0; ai < table.alphas.size(); ++ai) {
    const MultiIndex& alpha = table.alphas[ai];
    std::vector<double>& chunks = table.chunk_values[ai];
    chunks.resize(q);
    for (int k = 0; k < q; ++k) {
      if (alpha.order() == 0) {
        chunks[k] = 1.0;  // empty product
        continue;
      }
      std::vector<Vector> chunk_u(u.begin() + k * m, u.begin() + (k + 1) * m);
      chunks[k] = s_hat_chunk(chunk_u, alpha, oracle, config.combo_cap, rng);
    }
    table.medians[ai] = median_of(chunks);
    auto it = poly.terms.find(alpha);
    if (it != poly.terms.end()) total += it->second * table.medians[ai];
  }
  table.s_hat_n = total;
  return {total, table};
}

double plugin_baseline(const Dataset& dataset, PluginKind kind, double lambda,
                       const std::vector<Matrix>& eval_contexts) {
  const int n = dataset.size();
  if (n < 1) throw InvalidParameterError("plugin_baseline: empty dataset");
  if (eval_contexts.empty())
    throw InvalidParameterError("plugin_baseline: empty evaluation pool");
  const int d = dataset.d;

  Matrix X(n, d);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    X.row(i) = dataset.chosen_features(i).transpose();
    y[i] = dataset.records[i].reward;
  }

  Vector theta;
  if (kind == PluginKind::MinNormLS) {
    if (n < d) {
      // Minimum-norm solution through the n-dimensional Gram system.
      Matrix gram = X * X.transpose();
      Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
      const double lmax = eig.eigenvalues().maxCoeff();
      if (eig.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, lmax))
        throw SingularSystemError("plugin_baseline: singular Gram matrix");
      theta = X.transpose() * eig.eigenvectors() *
              eig.eigenvalues().cwiseInverse().asDiagonal() *
              eig.eigenvectors().transpose() * y;
    } else {
      Matrix gram = X.transpose() * X;
      Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
      const double lmax = eig.eigenvalues().maxCoeff();
      if (eig.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, lmax))
        throw SingularSystemError("plugin_baseline: singular normal system");
      theta = eig.eigenvectors() *
              eig.eigenvalues().cwiseInverse().asDiagonal() *
              eig.eigenvectors().transpose() * (X.transpose() * y);
    }
  } else {
    Matrix system = X.transpose() * X + lambda * Matrix::Identity(d, d);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(system);
    const double lmax = eig.eigenvalues().maxCoeff();
    if (eig.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, lmax))
      throw SingularSystemError(
          "plugin_baseline: ridge system singular (lambda too small)");
    theta = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
            eig.eigenvectors().transpose() * (X.transpose() * y);
  }

  double sum = 0.0;
  for (const Matrix& ctx : eval_contexts) sum += (ctx * theta).maxCoeff();
  return sum / double(eval_contexts.size());
}

}  // namespace vstar
