#include <doctest.h>

#include <random>

#include "dhf/disaggregation.hpp"
#include "dhf/kernels.hpp"
#include "dhf/mrdlm.hpp"
#include "dhf/pipeline.hpp"
#include "oracles.hpp"

using namespace dhf;

TEST_SUITE("kernels") {

TEST_CASE("exceptions propagate out of parallel loops") {
  CHECK_THROWS_AS(for_each_index(Exec::parallel, 100, [](Index i) {
                    if (i == 57) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}

TEST_CASE("serial and parallel results are bitwise equal") {
  set_threads(4);
  std::mt19937_64 rng(81);
  const auto h = Hierarchy::build(oracle::random_tree(rng, 4, 150));
  const Index nb = h.n_base();
  const long rows = 40;
  Matrix b = oracle::randn(rng, rows, nb).array() + 20.0;
  const Matrix y = aggregate(h.summing(), b);
  PipelineConfig pc;
  pc.mrdlm.period = 4;
  pc.mrdlm.init_window = 20;
  pc.horizon = 2;
  const auto factors = default_factors(h);
  Matrix x(rows, static_cast<Index>(factors.size()));
  for (std::size_t j = 0; j < factors.size(); ++j) x.col(static_cast<Index>(j)) = y.col(factors[j]);

  Mrdlm a = Mrdlm::initialize(pc.mrdlm, x, b);
  Mrdlm c = a;
  for (long t = 20; t < rows; ++t) {
    a.update(x.row(t).transpose(), b.row(t).transpose(), Exec::serial);
    c.update(x.row(t).transpose(), b.row(t).transpose(), Exec::parallel);
  }
  const auto pa = a.assemble_prior(2, Exec::serial);
  const auto pc2 = c.assemble_prior(2, Exec::parallel);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(pa[j].mean == pc2[j].mean);
    CHECK(pa[j].loadings == pc2[j].loadings);
    CHECK(pa[j].specific == pc2[j].specific);
  }

  std::vector<ExoValue> exo;
  for (Index k = 0; k < h.size(); ++k) exo.push_back({k, y(rows - 1, k), 1.0});
  const auto lay = slot_layout(h);
  const auto ra = build_regressors(pa[0], exo, h, lay, Exec::serial);
  const auto rb = build_regressors(pa[0], exo, h, lay, Exec::parallel);
  CHECK(ra.mean.cwiseEqual(rb.mean).count() + ra.mean.array().isNaN().count() == ra.mean.size());

  ReconcilerConfig two;
  two.boundary_level = "L1";
  Reconciler r1(h, two), r2(h, two);
  ForecastRecord rec1, rec2;
  const auto f1 = r1.forecast(pa[0], exo, 1, &rec1, Exec::serial);
  const auto f2 = r2.forecast(pa[0], exo, 1, &rec2, Exec::parallel);
  CHECK(f1.mean == f2.mean);
  r1.update(rec1, b.row(rows - 1).transpose(), Exec::serial);
  r2.update(rec2, b.row(rows - 1).transpose(), Exec::parallel);
  const auto g1 = r1.forecast(pa[1], exo, 2, nullptr, Exec::serial);
  const auto g2 = r2.forecast(pa[1], exo, 2, nullptr, Exec::parallel);
  CHECK(g1.mean == g2.mean);
  CHECK(g1.cov.variances() == g2.cov.variances());
}

}  // TEST_SUITE
