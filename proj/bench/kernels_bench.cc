// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "hashparse/chart.h"
#include "hashparse/trainer.h"

namespace hashparse {
namespace {

SpanScores random_scores(int n, int bits) {
  std::mt19937_64 rng(derive_seed(n, bits));
  std::vector<double> s(static_cast<size_t>(bits) * n * n);
  for (double& x : s) x = standard_normal(rng);
  return first_order_span_scores(ScoreTable(bits, n, std::move(s)));
}

void BM_InsideOutside(benchmark::State& state, Execution execution) {
  SpanScores scores = random_scores(static_cast<int>(state.range(0)), 20);
  for (auto _ : state) benchmark::DoNotOptimize(inside_outside(scores, execution).log_partition);
  state.SetComplexityN(state.range(0));
}
BENCHMARK_CAPTURE(BM_InsideOutside, serial, Execution::serial)->RangeMultiplier(2)->Range(8, 64)->Complexity();
BENCHMARK_CAPTURE(BM_InsideOutside, parallel, Execution::parallel)->RangeMultiplier(2)->Range(8, 64)->Complexity();

struct BatchFixture {
  std::vector<Sentence> sentences;
  std::vector<int> items;
  TrainConfig config;
  EncoderParams params;

  BatchFixture() {
    std::mt19937_64 rng(7);
    const int vocab = 40;
    for (int s = 0; s < 24; ++s) {
      Sentence sent;
      const int n = 4 + s % 12;
      for (int i = 0; i < n; ++i) sent.tokens.push_back({"w", "", 2 + static_cast<int>(uniform01(rng) * (vocab - 2))});
      sent.gold.n = n;
      sentences.push_back(sent);
      items.push_back(s);
    }
    config.bits = 20;
    config.dim = 40;
    config.layers = 2;
    params = EncoderParams::random(config.dims(vocab), config.dropout, 1);
  }
};

void BM_EvaluateBatch(benchmark::State& state, Execution execution) {
  static BatchFixture f;
  TrainConfig config = f.config;
  config.execution = execution;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_batch(f.params, f.sentences, f.items, config, 1, true).loss);
}
BENCHMARK_CAPTURE(BM_EvaluateBatch, serial, Execution::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_EvaluateBatch, parallel, Execution::parallel)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace hashparse

BENCHMARK_MAIN();
