#include <doctest.h>

#include <cmath>
#include <random>

#include "dhf/errors.hpp"
#include "dhf/factor_cov.hpp"
#include "dhf/structured_cov.hpp"
#include "oracles.hpp"

using namespace dhf;

namespace {

// Qbar = [[1, .5], [.5, 1]] in factor form.
GaussianFactorMoments worked() {
  GaussianFactorMoments fc;
  fc.mean = Vector::Zero(2);
  fc.loadings = Matrix::Constant(2, 1, std::sqrt(0.5));
  fc.factor_cov = Matrix::Ones(1, 1);
  fc.specific = Vector::Constant(2, 0.5);
  return fc;
}

GaussianFactorMoments diagonal(const Vector& d) {
  GaussianFactorMoments fc;
  fc.mean = Vector::Zero(d.size());
  fc.loadings = Matrix::Zero(d.size(), 1);
  fc.factor_cov = Matrix::Ones(1, 1);
  fc.specific = d;
  return fc;
}

}  // namespace

TEST_SUITE("factor_cov") {

TEST_CASE("cov_vec") {
  CHECK(cov_vec(diagonal(Vector::Ones(2)), Eigen::Vector2d(1, 0)) == Eigen::Vector2d(1, 0));
  const Vector g = cov_vec(worked(), Eigen::Vector2d(1, 0));
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-15));

  std::mt19937_64 rng(1);
  const auto fc = oracle::random_moments(rng, 50, 3);
  const Vector c = oracle::randn(rng, 50);
  CHECK(oracle::rel_err(cov_vec(fc, c), oracle::dense(fc) * c) < 1e-12);
}

TEST_CASE("quad_form") {
  CHECK(quad_form(worked(), Eigen::Vector2d(1, 0)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(quad_form(worked(), Vector::Zero(2)) == 0.0);
  std::mt19937_64 rng(2);
  const auto fc = oracle::random_moments(rng, 40, 4);
  const Vector c = oracle::randn(rng, 40);
  const double want = c.dot(oracle::dense(fc) * c);
  CHECK(std::abs(quad_form(fc, c) - want) / std::abs(want) < 1e-12);
}

TEST_CASE("woodbury_solve") {
  const Vector d(Eigen::Vector3d(1, 2, 4));
  const Matrix rhs = Matrix::Ones(3, 2);
  const Matrix x = woodbury_solve(diagonal(d), rhs);
  CHECK(oracle::max_abs(x.col(0), d.cwiseInverse()) < 1e-15);

  Matrix inv(2, 2);
  inv << 4.0 / 3, -2.0 / 3, -2.0 / 3, 4.0 / 3;
  CHECK(oracle::max_abs(woodbury_solve(worked(), Matrix::Identity(2, 2)), inv) < 1e-14);

  std::mt19937_64 rng(3);
  const auto fc = oracle::random_moments(rng, 200, 5);
  const Matrix b = oracle::randn(rng, 200, 3);
  const Matrix q = oracle::dense(fc);
  const Matrix want = q.ldlt().solve(b);
  CHECK(oracle::rel_err(woodbury_solve(fc, b), want) < 1e-9);
  CHECK(oracle::rel_err(q * woodbury_solve(fc, b), b) < 1e-8);
}

TEST_CASE("logdet") {
  CHECK(logdet(diagonal(Vector::Ones(2))) == doctest::Approx(0.0));
  CHECK(std::abs(logdet(worked()) - std::log(0.75)) < 1e-14);
  std::mt19937_64 rng(4);
  const auto fc = oracle::random_moments(rng, 120, 6);
  const Eigen::LDLT<Matrix> ldlt(oracle::dense(fc));
  const double want2 = ldlt.vectorD().array().log().sum();
  CHECK(std::abs(logdet(fc) - want2) < 1e-9);
}

TEST_CASE("rank-deficient factor covariance") {
  std::mt19937_64 rng(6);
  auto fc = oracle::random_moments(rng, 30, 3);
  const Matrix a = oracle::randn(rng, 3, 2);
  fc.factor_cov = a * a.transpose();
  const Matrix q = oracle::dense(fc);
  const Matrix b = oracle::randn(rng, 30, 2);
  CHECK(oracle::rel_err(woodbury_solve(fc, b), q.ldlt().solve(b)) < 1e-9);
  const Eigen::LDLT<Matrix> ldlt(q);
  CHECK(std::abs(logdet(fc) - ldlt.vectorD().array().log().sum()) < 1e-9);
}

TEST_CASE("storage") {
  std::mt19937_64 rng(7);
  for (Index nb : {1, 17, 300}) {
    for (Index nx : {0, 1, 5, 10}) {
      auto fc = oracle::random_moments(rng, nb, std::max<Index>(nx, 1));
      if (nx == 0) {
        fc.loadings.resize(nb, 0);
        fc.factor_cov.resize(0, 0);
      }
      CHECK(fc.storage_scalars() == nb * (nx + 2) + nx * nx);
    }
  }
}

TEST_CASE("validate") {
  auto fc = worked();
  CHECK_NOTHROW(fc.validate());
  fc.specific[0] = -1;
  CHECK_THROWS_AS(fc.validate(), NumericalError);
  fc = worked();
  fc.factor_cov(0, 0) = -1;
  CHECK_THROWS_AS(fc.validate(), NumericalError);
  fc = worked();
  fc.mean = Vector::Zero(3);
  CHECK_THROWS_AS(fc.validate(), DataError);
}

TEST_CASE("project") {
  const std::vector<Edge> e{{"T", "A", ""}, {"T", "B", ""}};
  const auto h = Hierarchy::build(e);
  const auto p = project(diagonal(Vector::Ones(2)), h.summing());
  CHECK(p.variance(0) == doctest::Approx(2.0));
  CHECK(p.cov(0, 1) == doctest::Approx(1.0));
  CHECK(project(worked(), h.summing()).variance(0) == doctest::Approx(3.0).epsilon(1e-15));

  const auto fig = Hierarchy::build(oracle::example_tree());
  const auto pf = project(diagonal(Vector::Ones(10)), fig.summing());
  CHECK(pf.variance(fig.index_of("A")) == doctest::Approx(4.0));

  std::mt19937_64 rng(8);
  const auto fc = oracle::random_moments(rng, 10, 2);
  const Matrix s = fig.summing().dense();
  const Matrix want = s * oracle::dense(fc) * s.transpose();
  const auto pr = project(fc, fig.summing());
  CHECK(oracle::rel_err(pr.dense(), want) < 1e-12);
  CHECK(oracle::rel_err(pr.variances(), want.diagonal()) < 1e-12);
  CHECK(oracle::rel_err(pr.mean(), s * fc.mean) < 1e-12);
  CHECK_THROWS_AS(project(fc, fig.summing(), 5).dense(), NumericalError);
}

TEST_CASE("structured covariance against dense") {
  std::mt19937_64 rng(10);
  const auto fc = oracle::random_moments(rng, 12, 2);
  std::vector<CovBlock> blocks{{{1, 4, 7}, oracle::random_spd(rng, 3, 0.5)}, {{2, 3}, oracle::random_spd(rng, 2, 0.5)}};
  const StructuredCovariance sc(fc.loadings, fc.factor_cov, fc.specific, blocks);
  Matrix want = oracle::dense(fc);
  for (const auto& b : blocks)
    for (std::size_t i = 0; i < b.index.size(); ++i)
      for (std::size_t j = 0; j < b.index.size(); ++j) {
        const Index r = b.index[i], c = b.index[j];
        want(r, c) += b.cov(static_cast<Index>(i), static_cast<Index>(j)) - (r == c ? fc.specific[r] : 0.0);
      }
  CHECK(oracle::rel_err(sc.dense(), want) < 1e-12);
  const Vector c = oracle::randn(rng, 12);
  CHECK(oracle::rel_err(sc.cov_vec(c), want * c) < 1e-12);
  CHECK(std::abs(sc.quad_form(c) - c.dot(want * c)) < 1e-10);
  const Matrix rhs = oracle::randn(rng, 12, 2);
  CHECK(oracle::rel_err(sc.solve(rhs), want.ldlt().solve(rhs)) < 1e-9);
  const Eigen::LDLT<Matrix> ldlt(want);
  CHECK(std::abs(sc.logdet() - ldlt.vectorD().array().log().sum()) < 1e-9);

  const auto fig = Hierarchy::build(oracle::example_tree());
  const auto fc10 = oracle::random_moments(rng, 10, 2);
  const auto s10 = StructuredCovariance::from_factor(fc10);
  const Matrix s = fig.summing().dense();
  const auto t = s10.transform(fig.summing().sparse());
  CHECK(oracle::rel_err(t.dense(), s * oracle::dense(fc10) * s.transpose()) < 1e-12);

  const Matrix d = oracle::random_spd(rng, 6);
  CHECK(oracle::rel_err(StructuredCovariance::from_dense(d).dense(), d) < 1e-15);
}

}  // TEST_SUITE
