#include <benchmark/benchmark.h>

#include "oscope/collector.hpp"
#include "oscope/rng.hpp"
#include "oscope/signalprep.hpp"

using namespace oscope;

namespace {

Window sensor_window() {
  Rng rng(9);
  Window w;
  w.features = feature_catalog();
  w.T = 5000;
  w.values.resize(5000 * 5);
  for (auto& v : w.values) v = rng.uniform(1000, 500000);
  return w;
}

}  // namespace

static void BM_minmax_5000x5(benchmark::State& state) {
  Window w = sensor_window();
  for (auto _ : state) {
    auto nw = prep::minmax_normalize(w);
    benchmark::DoNotOptimize(nw.values.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * 25000);
}
BENCHMARK(BM_minmax_5000x5);

static void BM_zscore_5000x5(benchmark::State& state) {
  Window w = sensor_window();
  for (auto _ : state) {
    auto nw = prep::zscore_standardize(w);
    benchmark::DoNotOptimize(nw.values.data());
  }
}
BENCHMARK(BM_zscore_5000x5);

static void BM_detect_onset(benchmark::State& state) {
  Rng rng(10);
  RawTrace t;
  t.features = feature_catalog();
  t.sample_interval_us = 1000;
  t.samples.resize(8000 * 5);
  for (std::size_t i = 0; i < t.samples.size(); ++i)
    t.samples[i] = 10000 + rng.uniform_int(5) + (i / 5 >= 6000 ? 400 : 0);
  for (auto _ : state) {
    auto onset = collector::detect_onset(t);
    benchmark::DoNotOptimize(onset);
  }
}
BENCHMARK(BM_detect_onset);
