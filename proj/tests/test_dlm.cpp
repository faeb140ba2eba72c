#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "checks.hpp"
#include "dhf/dlm.hpp"
#include "dhf/errors.hpp"

using namespace dhf;

namespace {

SvdState scalar_state(double m, double c) { return SvdState::from_cov(Vector::Constant(1, m), Matrix::Constant(1, 1, c)); }

DlmSpec local_level(double delta, double v) {
  DlmSpec s;
  s.blocks = {Block::level(delta)};
  s.learn_variance = false;
  s.fixed_variance = v;
  return s;
}

}  // namespace

TEST_SUITE("dlm") {

TEST_CASE("design") {
  DlmSpec lvl;
  lvl.blocks = {Block::level(1.0)};
  const auto d = build_design(lvl);
  CHECK(d.f == Vector::Ones(1));
  CHECK(d.g == Matrix::Identity(1, 1));

  DlmSpec seas;
  seas.blocks = {Block::seasonal(12, 1, 1.0)};
  const Matrix g = system_matrix(seas);
  const double w = 2 * std::numbers::pi / 12;
  CHECK(g(0, 0) == doctest::Approx(std::cos(w)));
  CHECK(g(0, 1) == doctest::Approx(std::sin(w)));
  CHECK(g(1, 0) == doctest::Approx(-std::sin(w)));

  DlmSpec reg;
  reg.blocks = {Block::level(1.0), Block::regression(2, 1.0)};
  const Vector x(Eigen::Vector2d(0.3, -1));
  const auto dr = build_design(reg, &x);
  CHECK(dr.f == Eigen::Vector3d(1, 0.3, -1));
  CHECK(dr.g == Matrix::Identity(3, 3));
  CHECK_THROWS_AS(build_design(reg), DataError);

  DlmSpec full;
  full.blocks = {Block::seasonal(12, 0, 1.0)};
  CHECK(full.dim() == 11);
  full.blocks = {Block::seasonal(7, 0, 1.0)};
  CHECK(full.dim() == 6);
}

TEST_CASE("validate") {
  DlmSpec s;
  s.blocks = {Block::level(0.0)};
  CHECK_THROWS_AS(s.validate(), DataError);
  s.blocks = {Block::seasonal(1, 0, 0.9)};
  CHECK_THROWS_AS(s.validate(), DataError);
  s.blocks = {Block::seasonal(12, 7, 0.9)};
  CHECK_THROWS_AS(s.validate(), DataError);
  s.blocks = {Block::trend(1.0)};
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("predict") {
  const auto spec = local_level(0.5, 1.0);
  const auto r = svd_predict(scalar_state(0, 1), spec);
  CHECK(r.cov()(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  const auto r1 = svd_predict(scalar_state(0, 1), local_level(1.0, 1.0));
  CHECK(r1.cov()(0, 0) == doctest::Approx(1.0).epsilon(1e-14));

  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    DlmSpec s6;
    s6.blocks = {Block::trend(oracle::uniform(rng, 0.8, 1)), Block::seasonal(4, 2, oracle::uniform(rng, 0.8, 1)),
                 Block::regression(1, oracle::uniform(rng, 0.8, 1))};
    REQUIRE(s6.dim() == 6);
    const Matrix c = oracle::random_spd(rng, 6);
    const SvdState st = SvdState::from_cov(oracle::randn(rng, 6), c);
    auto kf = oracle::kalman_for(s6, st.m, c, 1, 1);
    const Matrix p = kf.g * c * kf.g.transpose();
    Matrix want = p;
    for (std::size_t k = 0; k < kf.ranges.size(); ++k) {
      const auto [a, b] = kf.ranges[k];
      want.block(a, a, b - a, b - a) *= 1.0 / kf.discounts[k];
    }
    CHECK(oracle::max_abs(svd_predict(st, s6).cov(), want) < 1e-10);
  }
}

TEST_CASE("scalar update") {
  const auto prior = svd_predict(scalar_state(0, 1), local_level(0.5, 1.0));
  const auto up = svd_update(prior, Vector::Ones(1), 3.0, 1.0);
  CHECK(up.post.m[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(up.post.cov()(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(up.q == doctest::Approx(3.0));

  const auto same = svd_update(prior, Vector::Ones(1), prior.a[0], 1.0);
  CHECK(same.post.m[0] == prior.a[0]);
}

TEST_CASE("variance update") {
  const auto v = variance_update({1.0, 1.0}, 0.0, 1.0, 0.99);
  CHECK(v.n == doctest::Approx(1.99));
  CHECK(v.d == doctest::Approx(0.99));
  CHECK(v.s() == doctest::Approx(0.4975).epsilon(1e-4));

  VarianceState fixed{3.0, 6.0};
  for (int i = 0; i < 50; ++i) fixed = variance_update(fixed, 1.0, 1.0, 1.0);
  CHECK(fixed.s() == doctest::Approx(2.0));

  DlmSpec s;
  s.blocks = {Block::level(1.0)};
  s.variance_discount = 1.0;
  UnivariateDlm dlm(s, scalar_state(0, 100), {1.0, 1.0});
  std::mt19937_64 rng(12);
  std::normal_distribution<double> noise(0.0, 2.0);
  for (int t = 0; t < 2000; ++t) dlm.step(5.0 + noise(rng));
  CHECK(std::abs(dlm.obs_variance() - 4.0) < 0.4);
}

TEST_CASE("forecast") {
  UnivariateDlm stat(local_level(1.0, 1.0), scalar_state(1.5, 0.5), {});
  const auto fs = stat.forecast(3);
  REQUIRE(fs.size() == 3);
  CHECK(fs[0].f == fs[2].f);
  CHECK(fs[0].q == doctest::Approx(fs[2].q));

  UnivariateDlm one(local_level(0.4, 1.0), scalar_state(2.0, 2.0 / 3.0), {});
  const auto f1 = one.forecast(1);
  CHECK(f1[0].f == doctest::Approx(2.0));
  CHECK(f1[0].q == doctest::Approx(8.0 / 3.0).epsilon(1e-12));

  DlmSpec tr;
  tr.blocks = {Block::trend(1.0)};
  tr.learn_variance = false;
  UnivariateDlm trend(tr, SvdState::from_cov(Eigen::Vector2d(1.0, 0.5), Matrix::Identity(2, 2) * 0.1), {});
  const auto ft = trend.forecast(4);
  for (int j = 0; j < 4; ++j) CHECK(ft[static_cast<std::size_t>(j)].f == doctest::Approx(1.0 + 0.5 * (j + 1)));

  DlmSpec reg;
  reg.blocks = {Block::level(1.0), Block::regression(1, 1.0)};
  reg.learn_variance = false;
  UnivariateDlm r(reg, SvdState::from_cov(Eigen::Vector2d(1, 2), Matrix::Identity(2, 2)), {});
  CHECK_THROWS_AS(r.forecast(1), DataError);
  const std::vector<RegressorMoments> fut{{Vector::Constant(1, 3.0), Matrix::Constant(1, 1, 0.5)}};
  const auto fr = r.forecast(1, fut);
  // q = h'Rh + a'Ha + tr(RH) + v with h = [1, 3], a = [1, 2], R = I.
  CHECK(fr[0].f == doctest::Approx(7.0));
  CHECK(fr[0].q == doctest::Approx(10.0 + 4.0 * 0.5 + 0.5 + 1.0));
}

TEST_CASE("missing observation only inflates") {
  UnivariateDlm dlm(local_level(0.5, 1.0), scalar_state(1.0, 1.0), {});
  dlm.step(std::nullopt);
  CHECK(dlm.state().m[0] == 1.0);
  CHECK(dlm.state().cov()(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("svd filter matches dense filter") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 20; ++rep) CHECK(checks::dlm_vs_kalman(rng, 100).max() < 1e-8);
}

TEST_CASE("posterior variance along F does not exceed prior") {
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix c = oracle::random_spd(rng, 4);
    SvdPrior pr{oracle::randn(rng, 4), Matrix(), Vector()};
    const SvdState tmp = SvdState::from_cov(pr.a, c);
    pr.u = tmp.u;
    pr.s = tmp.s;
    const Vector f = oracle::randn(rng, 4);
    const auto up = svd_update(pr, f, 1.0, 0.5);
    CHECK(f.dot(up.post.cov() * f) <= f.dot(c * f) + 1e-12);
  }
}

TEST_CASE("static model covariance is nonincreasing") {
  DlmSpec s;
  s.blocks = {Block::level(1.0), Block::regression(2, 1.0)};
  s.learn_variance = false;
  UnivariateDlm dlm(s, SvdState::from_cov(Vector::Zero(3), Matrix::Identity(3, 3)), {});
  std::mt19937_64 rng(15);
  double tr = dlm.state().cov().trace();
  for (int t = 0; t < 50; ++t) {
    const Vector x = oracle::randn(rng, 2);
    dlm.step(oracle::randn(rng, 1)[0], &x);
    const double now = dlm.state().cov().trace();
    CHECK(now <= tr + 1e-12);
    tr = now;
  }
}

TEST_CASE("orthogonality over long runs") {
  DlmSpec s;
  s.blocks = {Block::trend(0.95), Block::seasonal(12, 2, 0.98)};
  UnivariateDlm dlm(s, SvdState::from_cov(Vector::Zero(6), Matrix::Identity(6, 6)), {1.0, 1.0});
  std::mt19937_64 rng(16);
  for (int t = 0; t < 10000; ++t) dlm.step(std::sin(0.5 * t) + oracle::randn(rng, 1)[0]);
  const Matrix& u = dlm.state().u;
  CHECK(oracle::max_abs(u.transpose() * u, Matrix::Identity(6, 6)) < 1e-9);
}

}  // TEST_SUITE
