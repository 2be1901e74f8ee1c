#include <benchmark/benchmark.h>

#include <rfsvm/harness.hpp>

#include "oracles.hpp"
#include "synthetic.hpp"

#include <numeric>

using namespace rfsvm;

namespace {

IndexList iota_list(Index n) {
  IndexList v(n);
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

const Dataset& hdlss() {
  static const Dataset d = testing::make_hdlss({"bench", {40, 32}, 1000, 20, 1.0, 1});
  return d;
}

}  // namespace

// Forest fit on 72 x 1000, argument = number of trees.
static void BM_FitForest(benchmark::State& state) {
  const auto& d = hdlss();
  const auto rows = iota_list(d.n());
  const ForestHyperparams hp{.n_trees = static_cast<Index>(state.range(0))};
  for (auto _ : state) benchmark::DoNotOptimize(fit_forest(d, rows, hp, 1));
}
BENCHMARK(BM_FitForest)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

static void BM_RfKernelBuckets(benchmark::State& state) {
  const auto& d = hdlss();
  const auto rows = iota_list(d.n());
  const auto f = fit_forest(d, rows, ForestHyperparams{.n_trees = static_cast<Index>(state.range(0))}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(rf_kernel_train(f, d, rows));
}
BENCHMARK(BM_RfKernelBuckets)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

// The O(n^2 M) definition, for comparison with the bucket construction.
static void BM_RfKernelPairwise(benchmark::State& state) {
  const auto& d = hdlss();
  const auto rows = iota_list(d.n());
  const auto f = fit_forest(d, rows, ForestHyperparams{.n_trees = static_cast<Index>(state.range(0))}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(oracle::pairwise_rf_kernel(f, d, rows, rows));
}
BENCHMARK(BM_RfKernelPairwise)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

static void BM_Smo(benchmark::State& state) {
  const auto d = testing::make_blobs(state.range(0) / 2, 2, 20, 3.0, 3);
  const auto rows = iota_list(d.n());
  const auto k = rbf_kernel(d, rows, rows, 0.05).values;
  std::vector<int> y(d.n());
  for (Index i = 0; i < y.size(); ++i) y[i] = d.label(i) == 0 ? 1 : -1;
  for (auto _ : state) benchmark::DoNotOptimize(solve_binary_smo(k, y, SvmHyperparams{.c = 10.0}));
}
BENCHMARK(BM_Smo)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

static void BM_Cosine(benchmark::State& state) {
  const auto& d = hdlss();
  const auto rows = iota_list(d.n());
  for (auto _ : state) benchmark::DoNotOptimize(cosine_kernel(d, rows, rows));
}
BENCHMARK(BM_Cosine)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
