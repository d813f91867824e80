#include <benchmark/benchmark.h>

#include "stable_cir/cir_process.hpp"
#include "stable_cir/estimators.hpp"
#include "stable_cir/rng.hpp"
#include "stable_cir/stable_dist.hpp"

using namespace stable_cir;

namespace {

const Theta kTheta0{2.0, 1.0, 0.5, 1.5};

const StableLaw& law_15() {
  static const StableLaw law(1.5);
  return law;
}

}  // namespace

// Table construction for a fresh alpha (the cost a LawCache miss pays).
static void BM_LawConstruction(benchmark::State& state) {
  const double alpha = static_cast<double>(state.range(0)) / 100.0;
  for (auto _ : state) {
    StableLaw law(alpha);
    benchmark::DoNotOptimize(law.mode());
  }
}
BENCHMARK(BM_LawConstruction)->Arg(120)->Arg(150)->Arg(180)->Unit(benchmark::kMillisecond);

static void BM_JetTabulated(benchmark::State& state) {
  const StableLaw& law = law_15();
  double x = -2.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(law.jet(x));
    x = x > 20.0 ? -2.0 : x + 0.37;
  }
}
BENCHMARK(BM_JetTabulated);

static void BM_JetDirect(benchmark::State& state) {
  const StableLaw& law = law_15();
  double x = -2.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(law.jet_direct(x));
    x = x > 20.0 ? -2.0 : x + 0.37;
  }
}
BENCHMARK(BM_JetDirect)->Unit(benchmark::kMicrosecond);

static void BM_Sample(benchmark::State& state) {
  const StableLaw& law = law_15();
  RngStream rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(sample(law, rng));
}
BENCHMARK(BM_Sample);

static void BM_SimulatePath(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(simulate_path(kTheta0, 1.0, n, 16, ++seed));
  state.SetItemsProcessed(state.iterations() * n * 16);
}
BENCHMARK(BM_SimulatePath)->Arg(500)->Arg(4000)->Unit(benchmark::kMillisecond);

static void BM_QuasiLikelihood(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const PathGrid path = simulate_path(kTheta0, 1.0, n, 16, 7);
  LawCache laws;
  laws.get(kTheta0.alpha);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_quasi_likelihood(path, kTheta0, laws));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_QuasiLikelihood)->Arg(500)->Arg(4000)->Unit(benchmark::kMicrosecond);

// Full pipeline with a warm cache, as in a replication worker.
static void BM_EstimateFull(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const PathGrid path = simulate_path(kTheta0, 1.0, n, 16, 9);
  LawCache laws;
  estimate_full(path, {}, laws);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_full(path, {}, laws));
}
BENCHMARK(BM_EstimateFull)->Arg(500)->Arg(4000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
