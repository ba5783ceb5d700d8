// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "cfgnn/baselines.hpp"
#include "cfgnn/gnn.hpp"

namespace {

cfgnn::Instance bench_instance(std::size_t k, std::size_t n) {
  cfgnn::SystemConfig c;
  c.aps = k;
  c.ues = n;
  c.antennas = 2;
  c.seed = 1000 + k * 31 + n;
  return cfgnn::make_instance(c);
}

void BM_PerApInference(benchmark::State& state) {
  const auto inst = bench_instance(static_cast<std::size_t>(state.range(0)), 5);
  const auto model = cfgnn::init_model(cfgnn::GnnArchitecture{}, 1);
  const auto csi = cfgnn::local_csi(0, inst.topology, inst.stats, inst.config);
  for (auto _ : state) benchmark::DoNotOptimize(cfgnn::predict_power(model, csi));
}
BENCHMARK(BM_PerApInference)->Arg(8)->Arg(16)->Arg(32);

void BM_DistributedAllAps(benchmark::State& state) {
  const auto inst = bench_instance(static_cast<std::size_t>(state.range(0)), 5);
  const auto model = cfgnn::init_model(cfgnn::GnnArchitecture{}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(cfgnn::distributed_allocation(model, inst));
}
BENCHMARK(BM_DistributedAllAps)->Arg(8)->Arg(16)->Arg(32);

void BM_CentralizedInference(benchmark::State& state) {
  const auto inst = bench_instance(static_cast<std::size_t>(state.range(0)), 5);
  const auto model = cfgnn::init_centralized_model(cfgnn::CentralizedArchitecture{}, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(cfgnn::centralized_predict(model, inst.topology, inst.stats, inst.config));
}
BENCHMARK(BM_CentralizedInference)->Arg(8)->Arg(16)->Arg(32);

void BM_Equal(benchmark::State& state) {
  const auto inst = bench_instance(static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(cfgnn::equal_allocation(inst.stats));
}
BENCHMARK(BM_Equal)->Arg(8)->Arg(32);

void BM_Proportional(benchmark::State& state) {
  const auto inst = bench_instance(static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(cfgnn::proportional_allocation(inst.stats));
}
BENCHMARK(BM_Proportional)->Arg(8)->Arg(32);

void BM_ProjectedGradient(benchmark::State& state) {
  const auto inst = bench_instance(static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(cfgnn::projected_gradient_allocation(inst.stats).power);
}
BENCHMARK(BM_ProjectedGradient)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ClosedFormRate(benchmark::State& state) {
  const auto inst = bench_instance(static_cast<std::size_t>(state.range(0)), 5);
  const auto p = cfgnn::proportional_allocation(inst.stats);
  for (auto _ : state) benchmark::DoNotOptimize(cfgnn::ergodic_rate(p, inst.stats).sum);
}
BENCHMARK(BM_ClosedFormRate)->Arg(8)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
