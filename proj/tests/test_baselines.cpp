#include <doctest.h>

#include <cmath>
#include <random>

#include "checks.hpp"
#include "dhf/baselines.hpp"
#include "dhf/errors.hpp"

using namespace dhf;

namespace {

Hierarchy two_base() {
  const std::vector<Edge> e{{"T", "A", ""}, {"T", "B", ""}};
  return Hierarchy::build(e);
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("OLS worked example") {
  const auto h = two_base();
  const auto m = Mint::ols(h.summing());
  const Vector b = m.reconcile_base(Eigen::Vector3d(2, 0.5, 1));
  CHECK(b[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(b[1] == doctest::Approx(7.0 / 6.0).epsilon(1e-14));
  CHECK(m.reconcile(Eigen::Vector3d(2, 0.5, 1))[0] == doctest::Approx(11.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("coherent input is a fixed point") {
  const auto h = two_base();
  const Vector b(Eigen::Vector2d(0.1, 0.7));
  const Vector y = h.summing().apply(b);
  CHECK(Mint::ols(h.summing()).reconcile_base(y) == b);
  CHECK(Mint::wls(h.summing(), Eigen::Vector3d(1, 2, 3)).reconcile_base(y) == b);
}

TEST_CASE("WLS with proportional variances equals OLS") {
  std::mt19937_64 rng(51);
  const auto h = Hierarchy::build(oracle::example_tree());
  const Vector yhat = oracle::randn(rng, h.size());
  const Vector a = Mint::ols(h.summing()).reconcile_base(yhat);
  const Vector b = Mint::wls(h.summing(), Vector::Constant(h.size(), 3.7)).reconcile_base(yhat);
  CHECK(oracle::max_abs(a, b) < 1e-12);
}

TEST_CASE("MinT properties on random hierarchies") {
  std::mt19937_64 rng(52);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = checks::mint_checks(rng);
    CHECK(d.idempotence < 1e-10);
    CHECK(d.projection < 1e-10);
    CHECK(d.fixed_point);
    CHECK(d.covariance < 1e-9);
  }
}

TEST_CASE("MinT errors") {
  const auto h = two_base();
  CHECK_THROWS_AS(Mint(h.summing(), -Matrix::Identity(3, 3)), NumericalError);
  CHECK_THROWS_AS(Mint(h.summing(), Matrix::Identity(2, 2)), DataError);
  CHECK_THROWS_AS(Mint::ols(h.summing()).reconcile_base(Vector::Ones(2)), DataError);
}

TEST_CASE("shrinkage estimator") {
  std::mt19937_64 rng(53);
  const Matrix indep = oracle::randn(rng, 2000, 5);
  const auto si = shrink_cov(indep);
  CHECK(si.lambda > 0.8);
  const Matrix off = si.cov - Matrix(si.cov.diagonal().asDiagonal());
  CHECK(off.cwiseAbs().maxCoeff() < 0.02);

  const Matrix two = oracle::randn(rng, 2, 4);
  CHECK(shrink_cov(two).lambda == 1.0);

  Matrix pair(500, 2);
  const Vector z = oracle::randn(rng, 500);
  pair.col(0) = z;
  pair.col(1) = 2.0 * z + 0.05 * oracle::randn(rng, 500);
  const auto sp = shrink_cov(pair);
  CHECK(sp.lambda < 0.05);
  CHECK(sp.cov(0, 1) / std::sqrt(sp.cov(0, 0) * sp.cov(1, 1)) > 0.9);

  Matrix gaps = oracle::randn(rng, 20, 3);
  gaps(4, 1) = std::nan("");
  CHECK(shrink_cov(gaps).cov.allFinite());
  CHECK_THROWS(shrink_cov(Matrix::Ones(1, 3)));
}

TEST_CASE("bottom-up") {
  const auto h = two_base();
  const auto bu = bottom_up(h.summing(), Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 1));
  CHECK(bu.mean == Eigen::Vector3d(3, 1, 2));
  CHECK(bu.base_cov.transform(h.summing().sparse()).variance(0) == doctest::Approx(2.0));

  std::mt19937_64 rng(54);
  const auto fig = Hierarchy::build(oracle::example_tree());
  const Vector mean = oracle::randn(rng, 10);
  const Vector var = (oracle::randn(rng, 10).array().abs() + 0.5).matrix();
  const Matrix res = oracle::randn(rng, 30, 10);
  const auto diag = bottom_up(fig.summing(), mean, var);
  const auto shr = bottom_up_shrink(fig.summing(), mean, var, res);
  CHECK(diag.mean == shr.mean);
  CHECK(diag.base_mean == shr.base_mean);

  const auto sc = shrink_cov(res);
  const Vector sd = var.cwiseSqrt();
  const Vector inv = sc.var.cwiseSqrt().cwiseInverse();
  const Matrix corr = inv.asDiagonal() * sc.cov * inv.asDiagonal();
  const Matrix vb = sd.asDiagonal() * corr * sd.asDiagonal();
  const Matrix s = fig.summing().dense();
  CHECK(oracle::rel_err(shr.base_cov.transform(fig.summing().sparse()).dense(), s * vb * s.transpose()) < 1e-12);
}

}  // TEST_SUITE
