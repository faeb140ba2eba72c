#include <benchmark/benchmark.h>

#include <random>

#include "dhf/disaggregation.hpp"
#include "dhf/kernels.hpp"
#include "dhf/mrdlm.hpp"
#include "dhf/pipeline.hpp"

using namespace dhf;

namespace {

// T -> 5 regions -> 100 stores -> 40 items each.
struct Fixture {
  Hierarchy h;
  Matrix y;
  Matrix x;
  Matrix b;
  Mrdlm model;
  std::vector<GaussianFactorMoments> priors;
  std::vector<ExoValue> exo;
  SlotLayout layout;

  Fixture() {
    std::vector<Edge> e{{"", "T", "total"}};
    for (int r = 0; r < 5; ++r) e.push_back({"T", "R" + std::to_string(r), "region"});
    for (int s = 0; s < 100; ++s) {
      const std::string st = "S" + std::to_string(s);
      e.push_back({"R" + std::to_string(s % 5), st, "store"});
      for (int i = 0; i < 40; ++i) e.push_back({st, st + "_" + std::to_string(i), "item"});
    }
    h = Hierarchy::build(e);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n01;
    const long rows = 30;
    b = Matrix(rows, h.n_base());
    for (Index j = 0; j < b.cols(); ++j)
      for (long t = 0; t < rows; ++t) b(t, j) = 10.0 + n01(rng);
    y = aggregate(h.summing(), b);
    const auto f = default_factors(h);
    x = Matrix(rows, static_cast<Index>(f.size()));
    for (std::size_t j = 0; j < f.size(); ++j) x.col(static_cast<Index>(j)) = y.col(f[j]);
    MrdlmConfig cfg;
    cfg.period = 12;
    cfg.init_window = 24;
    model = Mrdlm::initialize(cfg, x, b);
    priors = model.assemble_prior(2, Exec::serial);
    for (Index k = 0; k < h.size(); ++k) exo.push_back({k, y(rows - 1, k), 1.0});
    layout = slot_layout(h);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void BM_MrdlmUpdate(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) {
    Mrdlm m = f.model;
    m.update(f.x.row(25).transpose(), f.b.row(25).transpose(), exec_of(st));
    benchmark::DoNotOptimize(m);
  }
}

void BM_AssemblePrior(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) benchmark::DoNotOptimize(f.model.assemble_prior(2, exec_of(st)));
}

void BM_BuildRegressors(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) benchmark::DoNotOptimize(build_regressors(f.priors[0], f.exo, f.h, f.layout, exec_of(st)));
}

void BM_TwoStepReconcile(benchmark::State& st) {
  auto& f = fixture();
  ReconcilerConfig cfg;
  cfg.boundary_level = "store";
  Reconciler r(f.h, cfg);
  for (auto _ : st) benchmark::DoNotOptimize(r.forecast(f.priors[0], f.exo, 1, nullptr, exec_of(st)));
}

}  // namespace

BENCHMARK(BM_MrdlmUpdate)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AssemblePrior)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildRegressors)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TwoStepReconcile)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
