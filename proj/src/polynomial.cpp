#include "vstar/polynomial.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

namespace vstar {

namespace {

void emit_fixed_order(int K, int remaining, std::vector<int>& prefix,
                      std::vector<MultiIndex>& out) {
  if (static_cast<int>(prefix.size()) == K - 1) {
    prefix.push_back(remaining);
    out.push_back(MultiIndex{prefix});
    prefix.pop_back();
    return;
  }
  for (int v = 0; v <= remaining; ++v) {
    prefix.push_back(v);
    emit_fixed_order(K, remaining - v, prefix, out);
    prefix.pop_back();
  }
}

std::int64_t count_multi_indices(int K, int t) {
  // sum_{s<=t} C(s+K-1, K-1), computed incrementally.
  std::int64_t total = 0;
  double binom = 1.0;  // C(K-1, K-1)
  for (int s = 0; s <= t; ++s) {
    if (s > 0) binom = binom * (s + K - 1) / s;
    total += static_cast<std::int64_t>(std::llround(binom));
    if (total < 0 || binom > 9e17) return std::numeric_limits<std::int64_t>::max();
  }
  return total;
}

}  // namespace

double Polynomial::scan_c_max() const {
  double m = 0.0;
  for (const auto& [idx, c] : terms) m = std::max(m, std::abs(c));
  return m;
}

std::vector<MultiIndex> enumerate_multi_indices(int K, int t,
                                                std::int64_t cap) {
  if (K < 1) throw InvalidParameterError("enumerate_multi_indices: K >= 1");
  if (t < 0) throw InvalidParameterError("enumerate_multi_indices: t >= 0");
  const std::int64_t count = count_multi_indices(K, t);
  if (count > cap)
    throw CapacityError("enumerate_multi_indices: " + std::to_string(count) +
                        " indices exceed cap " + std::to_string(cap));
  std::vector<MultiIndex> out;
  out.reserve(count);
  std::vector<int> prefix;
  for (int s = 0; s <= t; ++s) emit_fixed_order(K, s, prefix, out);
  return out;
}

double eval_poly(const Polynomial& p, const std::vector<double>& z) {
  if (p.K != 0 && static_cast<int>(z.size()) != p.K)
    throw DimensionMismatchError("eval_poly: z has length " +
                                 std::to_string(z.size()) + ", expected " +
                                 std::to_string(p.K));
  double sum = 0.0;
  for (const auto& [idx, c] : p.terms) {
    if (static_cast<int>(z.size()) != idx.vars())
      throw DimensionMismatchError("eval_poly: term arity mismatch");
    double mono = c;
    for (int a = 0; a < idx.vars(); ++a)
      for (int e = 0; e < idx.alpha[a]; ++e) mono *= z[a];
    sum += mono;
  }
  return sum;
}

Polynomial fit_l1(int K, int t, int n_points, double lo, double hi,
                  std::uint64_t seed) {
  if (lo >= hi) throw InvalidParameterError("fit_l1: empty domain interval");
  const std::vector<MultiIndex> indices = enumerate_multi_indices(K, t);
  const int m = static_cast<int>(indices.size());
  if (n_points < m)
    throw InvalidParameterError(
        "fit_l1: need at least " + std::to_string(m) + " points, got " +
        std::to_string(n_points));

  auto draw_grid = [&](RngStream& rng, Eigen::MatrixXd& design,
                       Eigen::VectorXd& target) {
    design.resize(n_points, m);
    target.resize(n_points);
    std::vector<double> z(K);
    for (int i = 0; i < n_points; ++i) {
      double zmax = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < K; ++a) {
        z[a] = rng.uniform(lo, hi);
        zmax = std::max(zmax, z[a]);
      }
      target[i] = zmax;
      for (int j = 0; j < m; ++j) {
        double mono = 1.0;
        for (int a = 0; a < K; ++a)
          for (int e = 0; e < indices[j].alpha[a]; ++e) mono *= z[a];
        design(i, j) = mono;
      }
    }
  };

  RngStream train_rng = substream(seed, "l1-train");
  Eigen::MatrixXd A;
  Eigen::VectorXd y;
  draw_grid(train_rng, A, y);

  // IRLS on the smoothed l1 objective sum_i sqrt(r_i^2 + eps^2).
  const double eps = 1e-8;
  const int max_iter = 2000;
  Eigen::VectorXd c = (A.transpose() * A)
                          .ldlt()
                          .solve(A.transpose() * y);
  double prev_obj = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::VectorXd r = A * c - y;
    Eigen::VectorXd w =
        (r.array().square() + eps * eps).sqrt().inverse().matrix();
    const double obj = (r.array().square() + eps * eps).sqrt().sum();
    if (std::abs(prev_obj - obj) <= 1e-10 * std::max(1.0, obj)) {
      converged = true;
      break;
    }
    prev_obj = obj;
    Eigen::MatrixXd wa = w.asDiagonal() * A;
    c = (A.transpose() * wa).ldlt().solve(wa.transpose() * y);
  }
  if (!converged)
    throw SolverFailureError("fit_l1: IRLS did not converge in " +
                             std::to_string(max_iter) + " iterations");

  Polynomial p;
  p.K = K;
  p.degree = t;
  for (int j = 0; j < m; ++j) p.terms[indices[j]] = c[j];
  p.c_max = p.scan_c_max();

  RngStream val_rng = substream(seed, "l1-validate");
  Eigen::MatrixXd Av;
  Eigen::VectorXd yv;
  draw_grid(val_rng, Av, yv);
  Eigen::VectorXd rv = Av * c - yv;
  p.zeta_hat = rv.array().abs().maxCoeff();
  p.l1_error = rv.array().abs().mean();
  return p;
}

Polynomial binary_poly(int K, double omega) {
  if (omega == 0.0)
    throw InvalidParameterError("binary_poly: omega must be nonzero");
  if (K < 1) throw InvalidParameterError("binary_poly: K >= 1");
  if (K > 30) throw CapacityError("binary_poly: 2^K terms too large");
  const double w = std::abs(omega);

  Polynomial p;
  p.K = K;
  p.degree = K;
  // |w| (1 - prod_a (1 - z_a/|w|)) expands over nonempty subsets S of [K]
  // with coefficient (-1)^{|S|+1} |w|^{1-|S|}.
  for (std::uint32_t mask = 1; mask < (1u << K); ++mask) {
    MultiIndex idx;
    idx.alpha.assign(K, 0);
    int s = 0;
    for (int a = 0; a < K; ++a)
      if ((mask >> a) & 1u) {
        idx.alpha[a] = 1;
        ++s;
      }
    const double c = ((s % 2 == 1) ? 1.0 : -1.0) * std::pow(w, 1.0 - s);
    p.terms[idx] = c;
  }
  p.c_max = p.scan_c_max();
  p.zeta_hat = 0.0;  // exact on the sign-paired instance class
  p.l1_error = 0.0;
  return p;
}

}  // namespace vstar
