#include <benchmark/benchmark.h>

#include "jcl/cachesim.hpp"
#include "jcl/oracle.hpp"
#include "jcl/trace.hpp"

namespace {

jcl::Trace make_trace(uint64_t length) {
  jcl::GenParams p;
  p.length = length;
  p.working_set = 64;
  return jcl::gen_synthetic(jcl::WorkloadKind::Mixed, p, 42);
}

void BM_SimulateLru(benchmark::State& state) {
  jcl::Trace t = make_trace(static_cast<uint64_t>(state.range(0)));
  jcl::CacheConfig cfg;
  cfg.num_sets = 64;
  cfg.associativity = 4;
  for (auto _ : state) {
    jcl::LruPolicy lru;
    benchmark::DoNotOptimize(jcl::simulate(t, cfg, lru));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateLru)->Arg(10000)->Arg(100000);

void BM_SimulateLruStridePrefetch(benchmark::State& state) {
  jcl::Trace t = make_trace(static_cast<uint64_t>(state.range(0)));
  jcl::CacheConfig cfg;
  cfg.num_sets = 64;
  cfg.associativity = 4;
  cfg.prefetch_degree = 2;
  for (auto _ : state) {
    jcl::LruPolicy lru;
    jcl::StridePrefetcher sp(2);
    benchmark::DoNotOptimize(jcl::simulate(t, cfg, lru, &sp));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateLruStridePrefetch)->Arg(10000)->Arg(100000);

void BM_BeladySimulate(benchmark::State& state) {
  jcl::Trace t = make_trace(static_cast<uint64_t>(state.range(0)));
  jcl::CacheConfig cfg;
  cfg.num_sets = 64;
  cfg.associativity = 4;
  for (auto _ : state) {
    benchmark::DoNotOptimize(jcl::belady_simulate(t, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BeladySimulate)->Arg(10000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
