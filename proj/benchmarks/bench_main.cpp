#include <benchmark/benchmark.h>

#include "plandyn/analysis.hpp"
#include "plandyn/corpus.hpp"
#include "plandyn/graph.hpp"
#include "plandyn/policy.hpp"
#include "plandyn/trainers.hpp"

using namespace plandyn;

namespace {

struct Setup {
  Graph g;
  std::vector<Pair> pairs;
  SftDataset data;
  Model model;

  explicit Setup(int n) : g(gen_erdos_renyi_dag(n, 0.2, 1)) {
    pairs = split_pairs(g, 0.2, 2).train;
    data = sample_sft_dataset(g, pairs, 10, 3);
    model = TabularPolicy(n);
    SftConfig cfg;
    cfg.lr = 0.05;
    cfg.steps = 200;
    train_sft(model, data.counts, cfg);
  }
};

void BM_Closure(benchmark::State& state) {
  const Graph g = gen_erdos_renyi_dag(static_cast<int>(state.range(0)), 0.2, 1);
  for (auto _ : state) benchmark::DoNotOptimize(reachability_closure(g.adjacency()));
}
BENCHMARK(BM_Closure)->Arg(30)->Arg(100)->Arg(300);

void BM_SftFullBatchStep(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)));
  SftConfig cfg;
  cfg.lr = 0.01;
  for (auto _ : state) benchmark::DoNotOptimize(sft_step(s.model, s.data.counts, cfg));
}
BENCHMARK(BM_SftFullBatchStep)->Arg(30)->Arg(100);

void BM_PgStep(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)));
  PgConfig cfg;
  cfg.lr = 0.1;
  cfg.rollouts_per_step = 32;
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(pg_step(s.model, nullptr, s.g, s.pairs, cfg, rng).loss);
}
BENCHMARK(BM_PgStep)->Arg(30)->Arg(100);

void BM_QEpisode(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)));
  QConfig cfg;
  cfg.epsilon = 0.2;
  Rng rng(5);
  std::size_t k = 0;
  for (auto _ : state) {
    const auto [src, dst] = s.pairs[k++ % s.pairs.size()];
    const Sequence traj = q_rollout(s.model, src, dst, cfg, rng);
    benchmark::DoNotOptimize(q_step(s.model, s.g, traj, cfg).loss);
  }
}
BENCHMARK(BM_QEpisode)->Arg(30)->Arg(100);

void BM_ExpectedDiversity(benchmark::State& state) {
  Setup s(30);
  EvalOptions eval;
  eval.decode = DecodeConfig::temperature();
  eval.trials = 100;
  for (auto _ : state) benchmark::DoNotOptimize(expected_diversity(s.model, s.g, s.pairs, eval));
}
BENCHMARK(BM_ExpectedDiversity);

void BM_ExactAccuracy(benchmark::State& state) {
  Setup s(30);
  EvalOptions eval;
  eval.decode = DecodeConfig::temperature();
  for (auto _ : state) benchmark::DoNotOptimize(exact_accuracy(s.model, s.g, s.pairs, eval));
}
BENCHMARK(BM_ExactAccuracy);

}  // namespace

BENCHMARK_MAIN();
