#include <benchmark/benchmark.h>

#include "devmf/data.hpp"
#include "devmf/model.hpp"
#include "devmf/optimizer.hpp"

namespace {

devmf::data::SyntheticData make_data(std::size_t observations, std::size_t modes) {
  devmf::data::SyntheticSpec spec;
  spec.mode_sizes = modes == 3 ? std::vector<std::size_t>{200, 200, 25} : std::vector<std::size_t>{1000, 1000};
  spec.rank_mean = 10;
  spec.rank_dev = 10;
  spec.observed_fraction = static_cast<double>(observations) / 1e6;
  spec.noise = devmf::data::NoiseKind::lowrank_hetero;
  return devmf::data::synthesize(spec);
}

// One training epoch per iteration; the counter reports observations per second.
void run_epochs(benchmark::State& state, devmf::ModelKind kind) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto rank = static_cast<std::size_t>(state.range(1));
  const auto syn = make_data(n, devmf::mode_count(kind));
  devmf::TrainConfig cfg;
  cfg.model_kind = kind;
  cfg.hp.rank_mean = rank;
  cfg.hp.rank_dev = rank;
  cfg.hp.epochs = 1;
  for (auto _ : state) {
    auto result = devmf::train(syn.observed, cfg);
    benchmark::DoNotOptimize(result.mean.mu);
  }
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
  state.counters["obs/s"] = benchmark::Counter(static_cast<double>(n), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_BiasedMfEpoch(benchmark::State& s) { run_epochs(s, devmf::ModelKind::biased_mf); }
void BM_DmfEpoch(benchmark::State& s) { run_epochs(s, devmf::ModelKind::dmf); }
void BM_DtfEpoch(benchmark::State& s) { run_epochs(s, devmf::ModelKind::dtf); }

void BM_MeanPrediction(benchmark::State& state) {
  const auto syn = make_data(100000, 2);
  devmf::Hyperparams hp;
  hp.rank_mean = static_cast<std::size_t>(state.range(0));
  const auto [mean, dev] = devmf::initialize(syn.observed.mode_sizes, hp, 0, 0.0);
  std::size_t k = 0;
  for (auto _ : state) {
    const auto& e = syn.observed.entries[k++ % syn.observed.size()];
    benchmark::DoNotOptimize(devmf::predict_mean(mean, e.index[0], e.index[1]));
  }
}

}  // namespace

BENCHMARK(BM_BiasedMfEpoch)->ArgsProduct({{25000, 50000, 100000, 200000}, {10}})->Complexity(benchmark::oN)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DmfEpoch)->ArgsProduct({{25000, 50000, 100000, 200000}, {10}})->Complexity(benchmark::oN)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DmfEpoch)->ArgsProduct({{100000}, {5, 20, 40}})->Unit(benchmark::kMillisecond)->Name("BM_DmfEpochRank");
BENCHMARK(BM_DtfEpoch)->ArgsProduct({{50000, 100000}, {10}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MeanPrediction)->Arg(10)->Arg(50);

BENCHMARK_MAIN();
