#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "dhf/errors.hpp"
#include "dhf/hierarchy.hpp"
#include "oracles.hpp"

using namespace dhf;

namespace {

Hierarchy two_base() {
  const std::vector<Edge> e{{"T", "A", ""}, {"T", "B", ""}};
  return Hierarchy::build(e);
}

std::vector<std::string> ids_of(const Hierarchy& h, std::span<const Index> idx) {
  std::vector<std::string> out;
  for (Index i : idx) out.push_back(h.id(i));
  return out;
}

}  // namespace

TEST_SUITE("hierarchy") {

TEST_CASE("three-level example sizes and ordering") {
  const auto h = Hierarchy::build(oracle::example_tree());
  CHECK(h.n_aggregates() == 4);
  CHECK(h.n_base() == 10);
  CHECK(h.id(0) == "T");
  CHECK(h.id(1) == "A");
  CHECK(h.id(4) == "A1");
  CHECK(h.id(13) == "C3");
  CHECK(h.level_names() == std::vector<std::string>{"total", "region", "site"});
}

TEST_CASE("T = X + Y") {
  const std::vector<Edge> e{{"T", "X", ""}, {"T", "Y", ""}};
  const auto h = Hierarchy::build(e);
  CHECK(h.n_aggregates() == 1);
  CHECK(h.n_base() == 2);
}

TEST_CASE("build errors") {
  const std::vector<Edge> self{{"X", "X", ""}};
  CHECK_THROWS_WITH_AS(Hierarchy::build(self), doctest::Contains("cycle"), DataError);
  const std::vector<Edge> loop{{"T", "A", ""}, {"A", "B", ""}, {"B", "A", ""}};
  CHECK_THROWS_AS(Hierarchy::build(loop), DataError);
  const std::vector<Edge> none;
  CHECK_THROWS_AS(Hierarchy::build(none), DataError);
  const std::vector<Edge> dup{{"T", "A", ""}, {"T", "A", ""}};
  CHECK_THROWS_AS(Hierarchy::build(dup), DataError);
  const std::vector<Edge> ok{{"T", "A", ""}, {"T", "B", ""}};
  CHECK_THROWS_AS(Hierarchy::build(ok, [](const std::string& id) { return id == "A"; }), DataError);
  CHECK_NOTHROW(Hierarchy::build(ok, [](const std::string& id) { return id != "T"; }));
}

TEST_CASE("summing matrix") {
  const auto h = two_base();
  Matrix want(3, 2);
  want << 1, 1, 1, 0, 0, 1;
  CHECK(h.summing().dense() == want);

  const std::vector<Edge> single{{"", "X", "only"}};
  const auto h1 = Hierarchy::build(single);
  CHECK(h1.summing().dense() == Matrix::Ones(1, 1));

  const auto fig = Hierarchy::build(oracle::example_tree());
  Vector row_a = Vector::Zero(10);
  row_a.head(4).setOnes();
  CHECK(fig.summing().row(fig.index_of("A")) == row_a);
  CHECK(summing_matrix(fig).dense() == fig.summing().dense());
}

TEST_CASE("aggregate") {
  const auto h = two_base();
  Matrix b(2, 2);
  b << 1, 2, 0, 0;
  const Matrix y = aggregate(h.summing(), b);
  CHECK(y.row(0) == Eigen::RowVector3d(3, 1, 2));
  CHECK(y.row(1).isZero(0));

  const auto fig = Hierarchy::build(oracle::example_tree());
  const Matrix yf = aggregate(fig.summing(), Matrix::Ones(1, 10));
  CHECK(yf(0, 0) == 10);
  CHECK(yf(0, 1) == 4);
  CHECK(yf(0, 2) == 3);
  CHECK(yf(0, 3) == 3);
  CHECK_THROWS_AS(aggregate(fig.summing(), Matrix::Ones(1, 9)), DataError);
}

TEST_CASE("aggregate rows equal C b and base rows equal b") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto h = Hierarchy::build(oracle::random_tree(rng, oracle::uniform_int(rng, 2, 4), 60));
    const Matrix b = oracle::randn(rng, 3, h.n_base());
    const Matrix y = aggregate(h.summing(), b);
    CHECK(y.rightCols(h.n_base()) == b);
    const Matrix c = h.summing().dense().topRows(h.n_aggregates());
    CHECK(oracle::max_abs(y.leftCols(h.n_aggregates()), b * c.transpose()) < 1e-12);
    CHECK(check_coherence(y, h.summing(), 0.0).coherent);
  }
}

TEST_CASE("ancestors") {
  const auto fig = Hierarchy::build(oracle::example_tree());
  CHECK(ids_of(fig, fig.ancestors(1)) == std::vector<std::string>{"T", "A", "A2"});
  const auto h = two_base();
  CHECK(ids_of(h, h.ancestors(0)) == std::vector<std::string>{"T", "A"});
  CHECK(ancestors(h, 1) == std::vector<Index>{0, 2});

  // Grouped: base series a sits under two groups of the same level.
  const std::vector<Edge> grouped{{"", "G2", "grp"}, {"", "G1", "grp"}, {"G1", "a", "item"},
                                  {"G1", "b", "item"}, {"G2", "a", "item"}, {"G2", "c", "item"}};
  const auto g = Hierarchy::build(grouped);
  const auto anc = ids_of(g, g.ancestors(g.index_of("a") - g.n_aggregates()));
  CHECK(anc.size() == 3);
  CHECK(anc.back() == "a");
  const auto idx = g.ancestors(g.index_of("a") - g.n_aggregates());
  CHECK(std::is_sorted(idx.begin(), idx.end()));
}

TEST_CASE("common root in every pair of ancestor lists") {
  std::mt19937_64 rng(9);
  const auto h = Hierarchy::build(oracle::random_tree(rng, 4, 80));
  for (Index i = 0; i < h.n_base(); ++i) CHECK(h.ancestors(i).front() == 0);
}

TEST_CASE("partition of the three-level example") {
  const auto fig = Hierarchy::build(oracle::example_tree());
  const auto p = partition(fig, "region");
  CHECK_FALSE(p.degenerate);
  CHECK(p.upper.n_aggregates() == 1);
  CHECK(p.upper.n_base() == 3);
  REQUIRE(p.lowers.size() == 3);
  CHECK(p.lowers[0].n_base() == 4);
  CHECK(p.lowers[1].n_base() == 3);
  CHECK(p.lowers[2].n_base() == 3);
  CHECK(p.lowers[0].id(0) == "A");
  CHECK(p.forecast_assignment.at("total") == Side::upper);
  CHECK(p.forecast_assignment.at("site") == Side::lower);

  std::vector<Index> joined;
  for (const auto& lb : p.lower_base) joined.insert(joined.end(), lb.begin(), lb.end());
  std::vector<Index> want(10);
  std::iota(want.begin(), want.end(), Index{0});
  CHECK(joined == want);

  const auto top = partition(fig, "total");
  CHECK(top.lowers.size() == 1);
  CHECK(top.lowers[0].n_base() == 10);
  CHECK(top.upper.n_base() == 1);

  const auto bottom = partition(fig, "site");
  CHECK(bottom.degenerate);

  CHECK_THROWS_AS(partition(fig, "nope"), DataError);
}

TEST_CASE("partition flags non-nesting grouped aggregates") {
  // Stores hold departments which hold items; a product groups the same
  // item across stores and nests in neither side.
  std::vector<Edge> e{{"", "T", "total"}, {"T", "S1", "store"}, {"T", "S2", "store"}};
  for (int s = 1; s <= 2; ++s) {
    const std::string st = "S" + std::to_string(s);
    for (int p = 1; p <= 2; ++p) e.push_back({st, st + "_P" + std::to_string(p), "item"});
  }
  e.push_back({"", "P1", "product"});
  e.push_back({"", "P2", "product"});
  for (int s = 1; s <= 2; ++s)
    for (int p = 1; p <= 2; ++p)
      e.push_back({"P" + std::to_string(p), "S" + std::to_string(s) + "_P" + std::to_string(p), "item"});
  const auto h = Hierarchy::build(e);
  const auto part = partition(h, "store");
  CHECK(part.non_nesting.size() == 2);
  CHECK(part.forecast_assignment.at("product") == Side::lower);
  CHECK_THROWS_AS(partition(h, "store", {{"product", Side::upper}}), DataError);
}

TEST_CASE("coherence check") {
  const auto h = two_base();
  Vector y(3);
  y << 3.1, 1, 2;
  const auto rep = check_coherence(y, h.summing(), 1e-9);
  CHECK_FALSE(rep.coherent);
  CHECK(rep.max_violation == doctest::Approx(0.1).epsilon(1e-12));
  y[0] = 3.0;
  CHECK(check_coherence(y, h.summing(), 0.0).coherent);
}

TEST_CASE("edges round trip") {
  const auto fig = Hierarchy::build(oracle::example_tree());
  const auto again = Hierarchy::build(fig.edges());
  CHECK(again.ids() == fig.ids());
  CHECK(again.levels() == fig.levels());
  CHECK(again.summing().dense() == fig.summing().dense());
}

}  // TEST_SUITE
