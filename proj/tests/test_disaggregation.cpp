#include <doctest.h>

#include <cmath>
#include <random>

#include "dhf/disaggregation.hpp"
#include "dhf/errors.hpp"
#include "oracles.hpp"

using namespace dhf;

namespace {

GaussianFactorMoments worked() {
  GaussianFactorMoments fc;
  fc.mean = Vector::Zero(2);
  fc.loadings = Matrix::Constant(2, 1, std::sqrt(0.5));
  fc.factor_cov = Matrix::Ones(1, 1);
  fc.specific = Vector::Constant(2, 0.5);
  return fc;
}

Index count_active(const RegressorPanel& p, Index i) { return static_cast<Index>(p.active(i).size()); }

}  // namespace

TEST_SUITE("disaggregation") {

TEST_CASE("calibrate") {
  const auto ignore = calibrate(0.3, 2.0, 1.0, 0.5, 0.0);
  CHECK(ignore.f == 0.3);
  CHECK(ignore.q == 2.0);
  const auto adopt = calibrate(0.3, 2.0, 1.0, 0.5, 1.0);
  CHECK(adopt.f == 1.0);
  CHECK(adopt.q == 0.5);
  const auto half = calibrate(0.0, 1.0, 0.1, 0.9, 0.5);
  CHECK(half.f == doctest::Approx(0.05));
  CHECK(half.q == doctest::Approx(0.975));
  CHECK_THROWS_AS(calibrate(0, 1, 0, 1, 1.5), DataError);
}

TEST_CASE("worked example") {
  const auto fc = worked();
  const auto d = disaggregate(fc, Eigen::Vector2d(1, 0), 0.1, 0.9);
  CHECK(std::abs(d.mean[0] - 0.1) <= 1e-15);
  CHECK(std::abs(d.mean[1] - 0.05) <= 1e-15);
  Matrix want(2, 2);
  want << 0.9, 0.45, 0.45, 0.975;
  CHECK(oracle::max_abs(d.dense_cov(fc), want) <= 1e-15);
  CHECK(oracle::max_abs(d.variances(fc), want.diagonal()) <= 1e-15);
  CHECK_FALSE(d.inflated);
}

TEST_CASE("uninformative forecast leaves the prior unchanged") {
  std::mt19937_64 rng(31);
  const auto fc = oracle::random_moments(rng, 6, 2);
  const Vector c = (Vector(6) << 1, 1, 0, 1, 0, 0).finished();
  const Matrix q = oracle::dense(fc);
  const auto d = disaggregate(fc, c, c.dot(fc.mean), c.dot(q * c));
  CHECK(oracle::max_abs(d.mean, fc.mean) < 1e-14);
  CHECK(oracle::max_abs(d.dense_cov(fc), q) < 1e-13);
  const auto point = disaggregate(fc, c, 2.0, std::nullopt);
  CHECK(point.correction() == 0.0);
}

TEST_CASE("exact conditioning when the forecast is certain") {
  std::mt19937_64 rng(32);
  for (int rep = 0; rep < 50; ++rep) {
    const Index nb = oracle::uniform_int(rng, 2, 12);
    const auto fc = oracle::random_moments(rng, nb, oracle::uniform_int(rng, 1, 3));
    Vector c = Vector::Zero(nb);
    for (Index i = 0; i < nb; ++i) c[i] = oracle::uniform_int(rng, 0, 1);
    c[0] = 1;
    const double fhat = oracle::randn(rng, 1)[0];
    const auto d = disaggregate(fc, c, fhat, 0.0);
    const auto want = oracle::condition(fc.mean, oracle::dense(fc), c, fhat);
    CHECK(oracle::max_abs(d.mean, want.mean) < 1e-10);
    CHECK(oracle::max_abs(d.dense_cov(fc), want.cov) < 1e-10);
    CHECK(std::abs(c.dot(d.mean) - fhat) < 1e-10);
  }
}

TEST_CASE("inflation and errors") {
  const auto fc = worked();
  const auto d = disaggregate(fc, Eigen::Vector2d(1, 0), 0.0, 2.0);
  CHECK(d.inflated);
  CHECK(d.variances(fc)[0] == doctest::Approx(2.0));
  CHECK_THROWS_AS(disaggregate(fc, Eigen::Vector2d(1, 0), 0.0, -1.0), DataError);
  CHECK_THROWS_AS(disaggregate(fc, Eigen::Vector2d(0, 0), 0.0, 1.0), NumericalError);
  CHECK_THROWS_AS(disaggregate(fc, Vector::Ones(3), 0.0, 1.0), DataError);
}

TEST_CASE("regressor counts") {
  const std::vector<Edge> e{{"T", "A", ""}, {"T", "B", ""}};
  const auto h = Hierarchy::build(e);
  const auto lay = slot_layout(h);
  const std::vector<ExoValue> exo{{0, 1.0, 1.0}, {1, 0.5, 1.0}, {2, 0.5, 1.0}};
  const auto p = build_regressors(worked(), exo, h, lay);
  CHECK(count_active(p, 0) == 2);
  CHECK(count_active(p, 1) == 2);

  const auto fig = Hierarchy::build(oracle::example_tree());
  const auto fl = slot_layout(fig);
  CHECK(fl.names == std::vector<std::string>{"total", "region", "site"});
  std::mt19937_64 rng(33);
  const auto fc = oracle::random_moments(rng, 10, 3);
  std::vector<ExoValue> all;
  std::vector<ExoValue> aggs;
  for (Index s = 0; s < fig.size(); ++s) {
    all.push_back({s, 1.0, 2.0});
    if (!fig.is_base(s)) aggs.push_back({s, 1.0, 2.0});
  }
  const auto pa = build_regressors(fc, all, fig, fl);
  const auto pg = build_regressors(fc, aggs, fig, fl);
  for (Index i = 0; i < 10; ++i) {
    CHECK(count_active(pa, i) == 3);
    CHECK(count_active(pg, i) == 2);
  }
  CHECK(pa.n_empty() == 0);
  const auto none = build_regressors(fc, {}, fig, fl);
  CHECK(none.n_empty() == 10);

  const std::vector<ExoValue> dup{{0, 1.0, 1.0}, {0, 2.0, 1.0}};
  CHECK_THROWS_AS(build_regressors(fc, dup, fig, fl), DataError);
}

TEST_CASE("panel entries match a dense disaggregation") {
  const auto fig = Hierarchy::build(oracle::example_tree());
  const auto lay = slot_layout(fig);
  std::mt19937_64 rng(34);
  const auto fc = oracle::random_moments(rng, 10, 2);
  const Matrix q = oracle::dense(fc);
  const Matrix s = fig.summing().dense();
  std::vector<ExoValue> exo;
  for (Index k = 0; k < fig.size(); ++k) exo.push_back({k, oracle::randn(rng, 1)[0], oracle::uniform(rng, 0.1, 3.0)});
  const auto p = build_regressors(fc, exo, fig, lay, Exec::parallel);
  for (const auto& e : exo) {
    const Vector c = s.row(e.series).transpose();
    const Vector g = q * c;
    const double qbar = c.dot(g);
    const Vector mean = fc.mean + g * (e.mean - c.dot(fc.mean)) / qbar;
    const Vector var = q.diagonal() - g.cwiseAbs2() * (qbar - *e.variance) / (qbar * qbar);
    const auto anc_level = fig.level(e.series);
    const Index slot = *lay.find(anc_level);
    for (Index j : fig.support(e.series)) {
      CHECK(std::abs(p.mean(j, slot) - mean[j]) < 1e-12);
      CHECK(std::abs(p.var(j, slot) - std::max(var[j], 0.0)) < 1e-12);
    }
    CHECK(std::abs(c.dot(mean) - e.mean) < 1e-12);
  }
}

}  // TEST_SUITE
