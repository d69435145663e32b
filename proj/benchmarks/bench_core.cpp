#include <benchmark/benchmark.h>

#include <cstddef>
#include <set>
#include <tuple>
#include <vector>

#include "diffmg/linalg.hpp"
#include "diffmg/rng.hpp"
#include "diffmg/search.hpp"
#include "diffmg/synth.hpp"

using namespace diffmg;

namespace {

SparseMatrix random_adjacency(std::size_t n, std::size_t per_row,
                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
  for (std::size_t r = 0; r < n; ++r) {
    std::set<std::size_t> cols;
    while (cols.size() < per_row) cols.insert(rng.uniform_index(n));
    for (std::size_t c : cols) trips.emplace_back(r, c, rng.uniform(0.1, 1.0));
  }
  return row_normalize(SparseMatrix::from_triplets(n, n, std::move(trips)));
}

DenseMatrix random_dense(std::size_t rows, std::size_t cols,
                         std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

// 800-node planted dataset shared by the epoch benchmarks.
const HinDataset& bench_dataset() {
  static const HinDataset ds = [] {
    SynthConfig cfg;
    cfg.task = "nodeclass";
    cfg.n_classes = 3;
    cfg.noise = 0.1;
    cfg.node_types = {{"A", 400}, {"B", 200}, {"C", 200}};
    cfg.edge_types = {{"CB", "C", "B", 4},
                      {"BA", "B", "A", 4},
                      {"CA", "C", "A", 4},
                      {"AB", "A", "B", 4}};
    cfg.planted_K = 2;
    cfg.target_type = "A";
    cfg.planted = {{1, 0, "CB"}, {2, 0, "O"}, {2, 1, "BA"}};
    return synth_planted(cfg, 1);
  }();
  return ds;
}

void BM_Spmm(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const SparseMatrix a = random_adjacency(n, 8, 1);
  const DenseMatrix x = random_dense(n, 64, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(spmm(a, x));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(a.nnz()) * 64);
}
BENCHMARK(BM_Spmm)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_SpmmAdjoint(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const SparseMatrix a = random_adjacency(n, 8, 1);
  const DenseMatrix g = random_dense(n, 64, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(spmm_adjoint(a, g));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(a.nnz()) * 64);
}
BENCHMARK(BM_SpmmAdjoint)->Arg(1000)->Arg(10000);

// One alternating search update. The sampled mode propagates along a single
// path; the full-mixture mode propagates along every candidate of every
// link, which is the cost the sampling avoids.
void BM_SearchEpoch(benchmark::State& state) {
  const HinDataset& ds = bench_dataset();
  SearchConfig cfg;
  cfg.K = static_cast<std::size_t>(state.range(0));
  cfg.hidden = 64;
  cfg.mode = state.range(1) == 0 ? SearchMode::Sampled
                                 : SearchMode::DartsReference;
  Rng rng(7);
  SearchState st = init_search_state(ds, cfg, rng);
  reset_op_counters();
  for (auto _ : state) {
    benchmark::DoNotOptimize(search_epoch(st, ds, cfg, 0.1, rng));
  }
  state.counters["spmm/iter"] = benchmark::Counter(
      static_cast<double>(spmm_call_count()),
      benchmark::Counter::kAvgIterations);
}
BENCHMARK(BM_SearchEpoch)
    ->ArgsProduct({{2, 3, 4}, {0, 1}})
    ->ArgNames({"K", "full"});

}  // namespace

BENCHMARK_MAIN();
