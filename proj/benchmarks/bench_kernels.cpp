#include "mfcrf/dwt.hpp"
#include "mfcrf/grid_sample.hpp"
#include "mfcrf/wkv.hpp"

#include <benchmark/benchmark.h>
#include <torch/torch.h>

namespace {

using namespace mfcrf;

void BM_BiWkv(benchmark::State& state) {
  torch::manual_seed(0);
  const auto T = state.range(0);
  const auto k = torch::randn({1, T, 32});
  const auto v = torch::randn({1, T, 32});
  const auto w = torch::rand({32}) * 0.1;
  const auto u = torch::full({32}, 0.5);
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(bi_wkv(k, v, w, u));
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(BM_BiWkv)->Arg(256)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_GridSample(benchmark::State& state) {
  torch::manual_seed(0);
  const auto s = state.range(0);
  const auto input = torch::randn({1, 32, s, s});
  const SamplingGrid grid{make_base_grid(s, s, input.options()), torch::randn({1, s, s, 2}) * 0.02};
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(grid_sample(input, grid));
}
BENCHMARK(BM_GridSample)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Dwt(benchmark::State& state) {
  torch::manual_seed(0);
  const auto s = state.range(0);
  const auto f = torch::randn({1, 32, s, s});
  for (auto _ : state) benchmark::DoNotOptimize(dwt2_db4(f).hh);
}
BENCHMARK(BM_Dwt)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
