#include <benchmark/benchmark.h>

#include "oscope/dtwknn.hpp"
#include "oscope/rng.hpp"

using namespace oscope;

namespace {

std::vector<double> noisy_series(std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(len);
  double level = 0;
  for (auto& v : out) {
    level = 0.95 * level + rng.normal();
    v = level;
  }
  return out;
}

}  // namespace

static void BM_dtw_banded(benchmark::State& state) {
  const std::size_t T = static_cast<std::size_t>(state.range(0));
  const std::size_t band = static_cast<std::size_t>(state.range(1));
  auto x = noisy_series(T, 1);
  auto y = noisy_series(T, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dtw::dtw_distance(x, y, band));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(T * (2 * band + 1)));
}
BENCHMARK(BM_dtw_banded)->Args({1000, 100})->Args({5000, 500})->Unit(benchmark::kMillisecond);

static void BM_dtw_unbanded(benchmark::State& state) {
  const std::size_t T = static_cast<std::size_t>(state.range(0));
  auto x = noisy_series(T, 3);
  auto y = noisy_series(T, 4);
  for (auto _ : state) benchmark::DoNotOptimize(dtw::dtw_distance(x, y));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(T * T));
}
BENCHMARK(BM_dtw_unbanded)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_lb_keogh(benchmark::State& state) {
  const std::size_t T = 5000, band = 500;
  auto q = noisy_series(T, 5);
  auto c = noisy_series(T, 6);
  std::vector<double> upper, lower;
  dtw::band_envelope(q, band, upper, lower);
  for (auto _ : state) benchmark::DoNotOptimize(dtw::lb_keogh(upper, lower, c));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * static_cast<int64_t>(T));
}
BENCHMARK(BM_lb_keogh);

static void BM_band_envelope(benchmark::State& state) {
  auto q = noisy_series(5000, 7);
  std::vector<double> upper, lower;
  for (auto _ : state) {
    dtw::band_envelope(q, 500, upper, lower);
    benchmark::DoNotOptimize(upper.data());
  }
}
BENCHMARK(BM_band_envelope);
