#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "vstar/errors.hpp"
#include "vstar/rng.hpp"

namespace vstar {

/// Exponent multiset of one monomial over K action variables.
struct MultiIndex {
  std::vector<int> alpha;

  int vars() const { return static_cast<int>(alpha.size()); }
  int order() const {
    int s = 0;
    for (int a : alpha) s += a;
    return s;
  }
  /// Graded lexicographic: by total order, then lexicographic.
  bool operator<(const MultiIndex& other) const {
    const int sa = order(), sb = other.order();
    if (sa != sb) return sa < sb;
    return alpha < other.alpha;
  }
  bool operator==(const MultiIndex& other) const {
    return alpha == other.alpha;
  }
};

/// K-variate polynomial approximator of the max function, stored as a
/// multiset-indexed coefficient map. Immutable by convention once built.
struct Polynomial {
  int K = 0;
  int degree = 0;
  std::map<MultiIndex, double> terms;
  double c_max = 0.0;
  double zeta_hat = 0.0;   ///< sup |p - max| on the validation grid
  double l1_error = 0.0;   ///< mean |p - max| on the validation grid

  /// Recomputes c_max from the stored coefficients.
  double scan_c_max() const;
};

/// All multi-indices with |alpha| <= t over K variables, graded lex order.
/// Throws CapacityError when the count exceeds `cap`.
std::vector<MultiIndex> enumerate_multi_indices(int K, int t,
                                                std::int64_t cap = 1000000);

/// Exact monomial sum; 0^0 = 1. Throws on dimension mismatch.
double eval_poly(const Polynomial& p, const std::vector<double>& z);

/// Fits the degree-t coefficients by minimizing the l1 loss over n_points
/// uniform samples of [lo, hi]^K, solved by iteratively reweighted least
/// squares with 1e-8 smoothing. Validation metrics come from a fresh grid of
/// equal size drawn from a distinct substream of `seed`.
Polynomial fit_l1(int K, int t, int n_points, double lo, double hi,
                  std::uint64_t seed);

/// Exact degree-K expansion of the max over a sign-paired binary instance:
/// |w| * (1 - prod_a (1 - z_a / |w|)) written out monomial by monomial.
Polynomial binary_poly(int K, double omega);

}  // namespace vstar
