#include <cmath>
#include <set>

#include "doctest.h"
#include "vstar/rng.hpp"

using namespace vstar;

TEST_CASE("identical keys reproduce identical sequences") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("named substreams are distinct and order-independent") {
  const auto data = derive_key(7, "data");
  const auto unlabeled = derive_key(7, "unlabeled");
  const auto mc = derive_key(7, "monte-carlo");
  CHECK(data != unlabeled);
  CHECK(unlabeled != mc);
  CHECK(derive_key(7, "data", 1) != derive_key(7, "data", 2));
  CHECK(derive_key(8, "data") != data);

  // Drawing extra values from one stream never perturbs another.
  RngStream s1(data), s2(mc);
  const double first = s2.uniform();
  for (int i = 0; i < 1000; ++i) s1.next_u64();
  RngStream s2_again(mc);
  CHECK(s2_again.uniform() == first);
}

TEST_CASE("samplers hit their supports") {
  RngStream rng(substream(1, "samplers"));
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double r = rng.rademacher();
    CHECK(std::abs(r) == 1.0);
    const int k = rng.uniform_int(7);
    CHECK(k >= 0);
    CHECK(k < 7);
  }
}

TEST_CASE("gaussian moments are close at 100k draws") {
  RngStream rng(substream(2, "gaussian"));
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sumsq += g * g;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.02));
}
