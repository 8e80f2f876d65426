#include <benchmark/benchmark.h>

#include "oscope/nn/train.hpp"
#include "oscope/rng.hpp"

using namespace oscope;

namespace {

nn::Tensor random_batch(std::size_t B, std::size_t T, std::size_t n) {
  Rng rng(8);
  nn::Tensor x({B, T, n});
  for (double& v : x.data) v = rng.uniform(0, 1);
  return x;
}

}  // namespace

static void BM_forward_single_window(benchmark::State& state) {
  nn::Model model = nn::build_cnn_gru(5, 17);
  nn::Tensor x = random_batch(1, 5000, 5);
  for (auto _ : state) {
    nn::Tensor probs = model.forward(x, false);
    benchmark::DoNotOptimize(probs.data.data());
  }
}
BENCHMARK(BM_forward_single_window)->Unit(benchmark::kMillisecond);

static void BM_forward_batch32(benchmark::State& state) {
  nn::Model model = nn::build_cnn_gru(5, 17);
  nn::Tensor x = random_batch(32, 5000, 5);
  for (auto _ : state) {
    nn::Tensor probs = model.forward(x, false);
    benchmark::DoNotOptimize(probs.data.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * 32);
}
BENCHMARK(BM_forward_batch32)->Unit(benchmark::kMillisecond);

static void BM_train_step_batch32(benchmark::State& state) {
  const bool f32 = state.range(0) != 0;
  nn::TrainConfig cfg;
  cfg.f32 = f32;
  nn::Model model = nn::build_cnn_gru(5, 17, 5000, cfg);
  model.set_f32(f32);
  nn::Tensor x = random_batch(32, 5000, 5);
  std::vector<int> labels(32);
  for (std::size_t i = 0; i < 32; ++i) labels[i] = static_cast<int>(i % 17);

  for (auto _ : state) {
    nn::Tensor logits = model.forward_logits(x, true);
    nn::Tensor dlogits;
    benchmark::DoNotOptimize(nn::sparse_ce_loss(logits, labels, &dlogits));
    nn::Tensor grad = dlogits;
    for (std::size_t li = model.layers.size(); li-- > 0;)
      grad = model.layers[li]->backward(grad);
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * 32);
}
BENCHMARK(BM_train_step_batch32)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
