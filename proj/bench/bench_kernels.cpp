// Serial reference vs OpenMP kernels. Use OMP_NUM_THREADS to vary the
// thread count of the parallel variants.

#include <benchmark/benchmark.h>

#include <numeric>

#include "coda/acquisition.hpp"
#include "coda/belief_state.hpp"
#include "coda/benchmark_store.hpp"
#include "coda/pbest.hpp"

namespace {

coda::BenchmarkTask make_task(std::size_t H, std::size_t D, std::size_t C) {
  std::vector<double> acc(H);
  for (std::size_t k = 0; k < H; ++k) acc[k] = 0.85 - 0.3 * static_cast<double>(k) / static_cast<double>(H);
  return coda::generate_synthetic(coda::make_synthetic_spec(acc, D, C, 11));
}

void BM_PBestSerial(benchmark::State& st) {
  const auto task = make_task(static_cast<std::size_t>(st.range(0)), 500, 5);
  const auto belief = coda::initial_belief(task, {});
  const auto mix = coda::diagonal_betas(belief, coda::class_marginal(task, belief));
  const auto G = static_cast<std::size_t>(st.range(1));
  for (auto _ : st) benchmark::DoNotOptimize(coda::compute_pbest_serial(mix, G));
}

void BM_PBestParallel(benchmark::State& st) {
  const auto task = make_task(static_cast<std::size_t>(st.range(0)), 500, 5);
  const auto belief = coda::initial_belief(task, {});
  const auto mix = coda::diagonal_betas(belief, coda::class_marginal(task, belief));
  const auto G = static_cast<std::size_t>(st.range(1));
  for (auto _ : st) benchmark::DoNotOptimize(coda::compute_pbest(mix, G));
}

BENCHMARK(BM_PBestSerial)->Args({10, 2049})->Args({50, 2049})->Args({10, 129});
BENCHMARK(BM_PBestParallel)->Args({10, 2049})->Args({50, 2049})->Args({10, 129});

void BM_EigPerItem(benchmark::State& st) {
  const auto task = make_task(10, 200, static_cast<std::size_t>(st.range(0)));
  auto belief = coda::initial_belief(task, {});
  const auto mz = coda::Marginalizer::recompute();
  for (auto _ : st) {
    for (std::size_t i = 0; i < 20; ++i) {
      benchmark::DoNotOptimize(coda::eig_score(belief, task, mz, i, 129));
    }
  }
}

void BM_EigMemoized(benchmark::State& st) {
  const auto task = make_task(10, 200, static_cast<std::size_t>(st.range(0)));
  const auto belief = coda::initial_belief(task, {});
  const auto mz = coda::Marginalizer::recompute();
  std::vector<std::size_t> items(20);
  std::iota(items.begin(), items.end(), 0);
  coda::EigScorer scorer(task, 129);
  for (auto _ : st) benchmark::DoNotOptimize(scorer.score(belief, mz, items));
}

BENCHMARK(BM_EigPerItem)->Arg(2)->Arg(5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EigMemoized)->Arg(2)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
