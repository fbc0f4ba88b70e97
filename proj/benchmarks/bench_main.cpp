#include <random>

#include <benchmark/benchmark.h>

#include "handcast/eval.hpp"
#include "handcast/synthgen.hpp"
#include "handcast/training.hpp"

using namespace handcast;

namespace {

DenoiserConfig desk_config() {
  DenoiserConfig c;
  c.d_z = 64;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_ff = 256;
  c.d_img = 16;
  c.N = 50;
  c.schedule = ScheduleKind::kScaledLinear;
  return c;
}

const std::vector<Sequence>& dataset() {
  static const std::vector<Sequence> data = [] {
    GenConfig g;
    g.n_sequences = 32;
    g.d_img = 16;
    g.feature_mode = FeatureMode::kSceneEncoding;
    return generate_sequences(g);
  }();
  return data;
}

TrainingBatch batch(int n) {
  std::vector<const Sequence*> p;
  for (int i = 0; i < n; ++i) p.push_back(&dataset()[static_cast<std::size_t>(i)]);
  return make_batch(p);
}

void BM_Forward(benchmark::State& state) {
  const DenoiserConfig c = desk_config();
  const DenoiserModel m(c, 1);
  const TrainingBatch b = batch(static_cast<int>(state.range(0)));
  std::mt19937_64 rng(1);
  const DenoiserInput in{b.size(), gaussian_like(b.x0.rows(), b.x0.cols(), rng), b.conditions,
                         std::vector<int>(static_cast<std::size_t>(b.size()), 10)};
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(in));
  state.SetItemsProcessed(state.iterations() * b.size());
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const DenoiserConfig c = desk_config();
  DenoiserModel m(c, 1);
  Adam adam(m);
  const TrainingBatch b = batch(static_cast<int>(state.range(0)));
  const auto sched = make_schedule(c.schedule, c.N);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  std::mt19937_64 rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(m, adam, b, sched, tc, rng));
  state.SetItemsProcessed(state.iterations() * b.size());
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Sample(benchmark::State& state) {
  const DenoiserConfig c = desk_config();
  const DenoiserModel m(c, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model_forecasts(m, dataset(), 0, 32));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(dataset().size()));
}
BENCHMARK(BM_Sample)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
  std::vector<Forecast> fc;
  for (const auto& s : dataset()) fc.push_back(baseline_cvm(s));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate("cvm", dataset(), fc));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(dataset().size()));
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  GenConfig g;
  g.d_img = 16;
  std::uint64_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_sequence(g, i++));
}
BENCHMARK(BM_Generate)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
