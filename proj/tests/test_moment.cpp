#include <cmath>

#include "doctest.h"
#include "support/oracles.hpp"
#include "vstar/moment.hpp"

using namespace vstar;

namespace {

std::vector<Vector> chunk_from(const Dataset& data) {
  std::vector<Vector> u;
  for (int i = 0; i < data.size(); ++i)
    u.push_back(data.records[i].reward * data.chosen_features(i));
  return u;
}

Dataset tiny_dataset(std::vector<std::pair<double, double>> xy) {
  // d = 1, K = 1 records (x, y).
  Dataset data;
  data.d = 1;
  data.K = 1;
  data.whitened = true;
  for (auto& [x, y] : xy) {
    DatasetRecord rec;
    rec.features = Matrix::Constant(1, 1, x);
    rec.action = 1;
    rec.reward = y;
    data.records.push_back(rec);
  }
  return data;
}

}  // namespace

TEST_CASE("action list expansion follows the multiset layout") {
  CHECK(expand_action_list(MultiIndex{{2, 1}}) == std::vector<int>{1, 1, 2});
  CHECK(expand_action_list(MultiIndex{{0, 3}}) == std::vector<int>{2, 2, 2});
  CHECK(expand_action_list(MultiIndex{{1, 0, 1}}) == std::vector<int>{1, 3});
  CHECK_THROWS_AS(expand_action_list(MultiIndex{{0, 0}}),
                  InvalidParameterError);
}

TEST_CASE("analytic context moments match enumeration") {
  AnalyticRademacherOracle oracle(2);
  Vector e1 = Vector::Unit(2, 0);

  // Second moment within one arm is the identity quadratic form.
  CHECK(oracle.product_moment({e1, e1}, {1, 1}) == doctest::Approx(1.0));

  // Independent arms with zero mean: cross moment vanishes; verify by brute
  // force over the joint sign patterns in d = 1.
  {
    AnalyticRademacherOracle tiny(1);
    Vector u = Vector::Constant(1, 0.8), v = Vector::Constant(1, -1.3);
    double brute = 0.0;
    for (double x : {-1.0, 1.0})
      for (double y : {-1.0, 1.0}) brute += (u[0] * x) * (v[0] * y) / 4.0;
    CHECK(brute == doctest::Approx(0.0));
    CHECK(tiny.product_moment({u, v}, {1, 2}) == doctest::Approx(brute));
  }

  // Odd moments vanish; check the order-3 case against enumeration in d = 2.
  {
    Vector u(2), v(2), w(2);
    u << 0.3, -0.7;
    v << 1.1, 0.2;
    w << -0.4, 0.9;
    double brute = 0.0;
    int count = 0;
    test_oracles::for_each_rademacher_context(
        2, 1, [&](const Eigen::MatrixXd& ctx) {
          const Vector phi = ctx.row(0).transpose();
          brute += u.dot(phi) * v.dot(phi) * w.dot(phi);
          ++count;
        });
    brute /= count;
    CHECK(brute == doctest::Approx(0.0));
    CHECK(oracle.product_moment({u, v, w}, {1, 1, 1}) == doctest::Approx(0.0));
  }

  // Fourth moment within one arm, against enumeration in d = 2.
  {
    Vector u(2), v(2), w(2), x(2);
    u << 0.3, -0.7;
    v << 1.1, 0.2;
    w << -0.4, 0.9;
    x << 0.6, 0.5;
    double brute = 0.0;
    int count = 0;
    test_oracles::for_each_rademacher_context(
        2, 1, [&](const Eigen::MatrixXd& ctx) {
          const Vector phi = ctx.row(0).transpose();
          brute += u.dot(phi) * v.dot(phi) * w.dot(phi) * x.dot(phi);
          ++count;
        });
    brute /= count;
    CHECK(oracle.product_moment({u, v, w, x}, {1, 1, 1, 1}) ==
          doctest::Approx(brute));
  }

  CHECK_THROWS_AS(
      oracle.product_moment({e1, e1, e1, e1, e1}, {1, 1, 1, 1, 1}),
      UnsupportedError);
}

TEST_CASE("pool oracle converges to the analytic one") {
  RngStream rng(substream(31, "pool"));
  std::vector<Matrix> pool;
  for (int i = 0; i < 60000; ++i) {
    Matrix ctx(2, 3);
    for (int a = 0; a < 2; ++a)
      for (int j = 0; j < 3; ++j) ctx(a, j) = rng.rademacher();
    pool.push_back(ctx);
  }
  UnlabeledPoolOracle pooled(std::move(pool));
  AnalyticRademacherOracle analytic(3);
  Vector u(3), v(3);
  u << 0.5, -0.2, 0.8;
  v << -0.1, 0.9, 0.3;
  CHECK(pooled.product_moment({u, v}, {1, 1}) ==
        doctest::Approx(analytic.product_moment({u, v}, {1, 1})).epsilon(0.05));
  CHECK(pooled.product_moment({u, v}, {2, 2}) ==
        doctest::Approx(analytic.product_moment({u, v}, {2, 2}))
            .epsilon(0.05));
  CHECK(pooled.mean_feature(1).cwiseAbs().maxCoeff() < 0.02);
  CHECK(pooled.cross_moment(1, 1).isApprox(Matrix::Identity(3, 3), 0.05));
}

TEST_CASE("chunk estimator reproduces the hand-worked 1-d example") {
  const Dataset data = tiny_dataset({{1.0, 0.5}, {-1.0, -0.5}});
  AnalyticRademacherOracle oracle(1);
  RngStream rng(substream(1, "combo"));
  const double v =
      s_hat_chunk(chunk_from(data), MultiIndex{{2}}, oracle, 20000, rng);
  CHECK(v == doctest::Approx(0.25));  // theta^2 E X^2 with theta = 0.5
}

TEST_CASE("first-order terms vanish under the analytic oracle") {
  const Dataset data = tiny_dataset({{1.0, 0.3}, {-1.0, 0.9}, {1.0, -0.2}});
  AnalyticRademacherOracle oracle(1);
  RngStream rng(substream(2, "combo"));
  CHECK(s_hat_chunk(chunk_from(data), MultiIndex{{1}}, oracle, 20000, rng) ==
        0.0);
}

TEST_CASE("chunk estimator needs at least s records") {
  const Dataset data = tiny_dataset({{1.0, 0.5}});
  AnalyticRademacherOracle oracle(1);
  RngStream rng(substream(3, "combo"));
  CHECK_THROWS_AS(
      s_hat_chunk(chunk_from(data), MultiIndex{{2}}, oracle, 20000, rng),
      InsufficientDataError);
}

TEST_CASE("chunk estimates are unbiased against enumerated moments") {
  const int d = 5;
  LawParams params;
  RngStream theta_rng(substream(71, "theta"));
  Vector theta(d);
  for (int j = 0; j < d; ++j) theta[j] = theta_rng.uniform(-0.4, 0.4);
  params.theta = theta;
  const auto inst = make_instance(FeatureLawKind::RademacherIID, d, 2, params, 71);
  AnalyticRademacherOracle oracle(d);

  for (const auto& alpha :
       {MultiIndex{{1, 0}}, MultiIndex{{2, 0}}, MultiIndex{{1, 1}}}) {
    const double exact = test_oracles::rademacher_s_alpha(theta, alpha.alpha);
    const int chunks = 400, m = 12;
    double sum = 0.0, sumsq = 0.0;
    for (int k = 0; k < chunks; ++k) {
      RngStream data_rng = substream(72, "chunk", k);
      const Dataset data = collect_uniform(inst, m, data_rng);
      Dataset wdata = data;
      wdata.whitened = true;
      RngStream combo_rng = substream(73, "combo", k);
      const double v =
          s_hat_chunk(chunk_from(wdata), alpha, oracle, 20000, combo_rng);
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / chunks;
    const double se =
        std::sqrt((sumsq / chunks - mean * mean) / (chunks - 1));
    CHECK(std::abs(mean - exact) <= 4.0 * se + 1e-12);
  }
}

TEST_CASE("median assembly shrugs off a corrupted chunk") {
  // Ten noiseless unit records -> every clean chunk value is exactly 1.
  Dataset data = tiny_dataset({{1, 1}, {1, 1}, {1, 1}, {1, 1}, {1, 1},
                               {1, 1}, {1, 1}, {1, 1}, {1, 1}, {1, 1}});
  Polynomial p;
  p.K = 1;
  p.degree = 2;
  p.terms[MultiIndex{{2}}] = 1.0;
  AnalyticRademacherOracle oracle(1);
  MomentConfig cfg{2, 5, 0.05, 20000};
  RngStream rng(substream(4, "mom"));
  const auto clean = estimate_v_star_moment(data, p, cfg, oracle, rng);
  CHECK(clean.first == doctest::Approx(1.0));

  data.records[4].reward = 1e6;  // lands in the middle chunk
  RngStream rng2(substream(4, "mom"));
  const auto corrupted = estimate_v_star_moment(data, p, cfg, oracle, rng2);
  CHECK(corrupted.first == doctest::Approx(1.0));  // adjacent clean gap is 0
}

TEST_CASE("full-enumeration estimate is invariant to record order") {
  LawParams params;
  params.i_star = 0;
  params.omega = 1.0;
  const auto inst = make_instance(FeatureLawKind::SparseBinary, 3, 2, params, 51);
  RngStream data_rng = substream(51, "data");
  Dataset data = collect_uniform(inst, 8, data_rng);
  data.whitened = true;

  // Pool oracle has an asymmetric cross-moment estimate, which exercises the
  // arrangement averaging.
  RngStream pool_rng = substream(51, "pool");
  UnlabeledPoolOracle oracle(collect_unlabeled(inst, 500, pool_rng));

  const auto poly = binary_poly(2, 1.0);
  MomentConfig cfg{2, 1, 0.05, 1000000000};
  RngStream r1(substream(52, "m"));
  const double forward =
      estimate_v_star_moment(data, poly, cfg, oracle, r1).first;

  Dataset reversed = data;
  std::reverse(reversed.records.begin(), reversed.records.end());
  RngStream r2(substream(52, "m"));
  const double backward =
      estimate_v_star_moment(reversed, poly, cfg, oracle, r2).first;
  CHECK(forward == doctest::Approx(backward).epsilon(1e-12));
}

TEST_CASE("combination subsampling is deterministic given the stream") {
  const auto inst = make_instance(FeatureLawKind::RademacherIID, 4, 2, {}, 61);
  RngStream data_rng = substream(61, "data");
  Dataset data = collect_uniform(inst, 40, data_rng);
  data.whitened = true;
  AnalyticRademacherOracle oracle(4);
  RngStream ra(substream(62, "c")), rb(substream(62, "c"));
  const double a =
      s_hat_chunk(chunk_from(data), MultiIndex{{1, 1}}, oracle, 50, ra);
  const double b =
      s_hat_chunk(chunk_from(data), MultiIndex{{1, 1}}, oracle, 50, rb);
  CHECK(a == b);
}

TEST_CASE("estimator contracts: whitening flag and chunk budget") {
  const auto inst = make_instance(FeatureLawKind::RademacherIID, 4, 2, {}, 63);
  RngStream data_rng = substream(63, "data");
  Dataset raw = collect_uniform(inst, 20, data_rng);
  Polynomial p;
  p.K = 2;
  p.degree = 2;
  p.terms[MultiIndex{{1, 1}}] = 1.0;
  AnalyticRademacherOracle oracle(4);
  MomentConfig cfg{2, 1, 0.05, 20000};
  RngStream rng(substream(63, "m"));
  CHECK_THROWS_AS(estimate_v_star_moment(raw, p, cfg, oracle, rng),
                  InvalidParameterError);

  raw.whitened = true;
  MomentConfig big_q{2, 11, 0.05, 20000};
  CHECK_THROWS_AS(estimate_v_star_moment(raw, p, big_q, oracle, rng),
                  InsufficientDataError);
}

TEST_CASE("zero-signal estimates stay near zero") {
  LawParams params;
  params.theta = Vector::Zero(10);
  const auto inst = make_instance(FeatureLawKind::RademacherIID, 10, 2, params, 64);
  const auto poly = fit_l1(2, 2, 400, -2.0, 2.0, 64);
  Polynomial centered = poly;
  centered.terms[MultiIndex{{0, 0}}] = 0.0;  // drop the constant term
  AnalyticRademacherOracle oracle(10);
  MomentConfig cfg{2, 1, 0.05, 20000};
  int ok = 0;
  for (int seed = 0; seed < 10; ++seed) {
    RngStream data_rng = substream(65, "data", seed);
    Dataset data = collect_uniform(inst, 400, data_rng);
    data.whitened = true;
    RngStream rng = substream(65, "m", seed);
    const double v =
        estimate_v_star_moment(data, centered, cfg, oracle, rng).first;
    if (std::abs(v) <= 0.1) ++ok;
  }
  CHECK(ok >= 9);
}

TEST_CASE("sign-paired binary instance is estimated within tolerance") {
  LawParams params;
  params.i_star = 0;
  params.omega = 1.0;
  const auto inst = make_instance(FeatureLawKind::SparseBinary, 20, 2, params, 66);
  const double v_star = oracle_v_star(inst, OracleMethod::Enumerate).value;
  CHECK(v_star == doctest::Approx(1.0));

  const auto poly = binary_poly(2, 1.0);
  MomentConfig cfg{2, 1, 0.05, 20000};
  int ok = 0;
  for (int seed = 0; seed < 5; ++seed) {
    RngStream pool_rng = substream(67, "pool", seed);
    UnlabeledPoolOracle oracle(collect_unlabeled(inst, 4000, pool_rng));
    RngStream data_rng = substream(67, "data", seed);
    Dataset data = collect_uniform(inst, 2000, data_rng);
    data.whitened = true;
    RngStream rng = substream(67, "m", seed);
    const double v = estimate_v_star_moment(data, poly, cfg, oracle, rng).first;
    if (std::abs(v - v_star) <= 0.15) ++ok;
  }
  CHECK(ok >= 4);
}

TEST_CASE("chunk variance decays at the expected rate in m") {
  const int d = 10;
  LawParams params;
  RngStream theta_rng(substream(81, "theta"));
  Vector theta(d);
  for (int j = 0; j < d; ++j) theta[j] = theta_rng.uniform(-0.3, 0.3);
  params.theta = theta;
  const auto inst = make_instance(FeatureLawKind::RademacherIID, d, 2, params, 81);
  AnalyticRademacherOracle oracle(d);
  const MultiIndex alpha{{2, 0}};  // the cross term is exactly zero under
                                   // the analytic oracle, so use a same-arm
                                   // pair that carries sampling noise

  std::vector<int> ms{50, 100, 200, 400};
  std::vector<double> log_m, log_var;
  for (int m : ms) {
    const int reps = 120;
    double sum = 0.0, sumsq = 0.0;
    for (int r = 0; r < reps; ++r) {
      RngStream data_rng = substream(82, "data", m * 1000 + r);
      Dataset data = collect_uniform(inst, m, data_rng);
      data.whitened = true;
      RngStream rng = substream(82, "c", m * 1000 + r);
      const double v = s_hat_chunk(chunk_from(data), alpha, oracle, 20000, rng);
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / reps;
    log_m.push_back(std::log(double(m)));
    log_var.push_back(std::log(sumsq / reps - mean * mean));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < log_m.size(); ++i) {
    mx += log_m[i] / log_m.size();
    my += log_var[i] / log_var.size();
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < log_m.size(); ++i) {
    num += (log_m[i] - mx) * (log_var[i] - my);
    den += (log_m[i] - mx) * (log_m[i] - mx);
  }
  const double slope = num / den;
  CHECK(slope >= -1.5);
  CHECK(slope <= -0.6);
}

TEST_CASE("plug-in baselines: identified regime, shrinkage, and errors") {
  // Noiseless identified case recovers theta exactly, so the plug-in value
  // equals the pool mean of the true maxima.
  LawParams params;
  Vector theta = Vector::Zero(2);
  theta[0] = 1.0;
  params.theta = theta;
  params.noise_law = NoiseLaw::None;
  const auto inst = make_instance(FeatureLawKind::RademacherIID, 2, 2, params, 91);
  RngStream data_rng = substream(91, "data");
  const Dataset data = collect_uniform(inst, 10, data_rng);
  RngStream pool_rng = substream(91, "pool");
  const auto pool = collect_unlabeled(inst, 500, pool_rng);
  const double value =
      plugin_baseline(data, PluginKind::MinNormLS, 0.0, pool);
  double exact = 0.0;
  for (const auto& ctx : pool) exact += (ctx * theta).maxCoeff();
  exact /= pool.size();
  CHECK(value == doctest::Approx(exact).epsilon(1e-9));

  // Ridge on pure noise: pilot runs put the plug-in value around 0.09-0.13
  // at this size, and shrinkage keeps it below the unregularized solution.
  LawParams zp;
  zp.theta = Vector::Zero(300);
  const auto zero_inst =
      make_instance(FeatureLawKind::RademacherIID, 300, 2, zp, 92);
  int ok = 0;
  for (int seed = 0; seed < 5; ++seed) {
    RngStream zd = substream(92, "data", seed);
    const Dataset zdata = collect_uniform(zero_inst, 100, zd);
    RngStream zpool = substream(92, "pool", seed);
    const auto zpool_ctx = collect_unlabeled(zero_inst, 1000, zpool);
    const double ridge =
        plugin_baseline(zdata, PluginKind::Ridge, 1.0, zpool_ctx);
    const double minnorm =
        plugin_baseline(zdata, PluginKind::MinNormLS, 0.0, zpool_ctx);
    if (std::abs(ridge) <= 0.2 && std::abs(ridge) <= std::abs(minnorm) + 1e-12)
      ++ok;
  }
  CHECK(ok >= 4);

  // lambda = 0 with n < d is an ill-posed system.
  RngStream zd = substream(93, "data");
  const Dataset small = collect_uniform(zero_inst, 50, zd);
  RngStream zpool = substream(93, "pool");
  const auto pool2 = collect_unlabeled(zero_inst, 10, zpool);
  CHECK_THROWS_AS(plugin_baseline(small, PluginKind::Ridge, 0.0, pool2),
                  SingularSystemError);
  CHECK_THROWS_AS(plugin_baseline(Dataset{}, PluginKind::MinNormLS, 0.0, pool2),
                  InvalidParameterError);
}

TEST_CASE("chunk count derivation follows the failure probability") {
  CHECK(derive_chunk_count(std::exp(-1.0)) == 48);
  CHECK(derive_chunk_count(0.01) == int(std::ceil(48.0 * std::log(100.0))));
  CHECK_THROWS_AS(derive_chunk_count(0.9), InvalidParameterError);
}
