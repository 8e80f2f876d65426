#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "oscope/nn/layers.hpp"
#include "oscope/signalprep.hpp"
#include "oscope/types.hpp"

namespace oscope::nn {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  bool f32 = false;  // 32-bit compute mode for the heavy products
};

struct ModelMeta {
  std::string model_type = "cnn_gru";
  std::size_t T = kWindowLength;
  std::size_t n = 1;
  std::size_t c = 2;
  std::vector<FeatureId> features;
  std::vector<std::string> classes;
  prep::NormMethod norm = prep::NormMethod::minmax;
  std::int64_t sample_interval_us = 1000;
  std::string device_model;  // optional; used for default-model matching
};

class Model {
 public:
  std::vector<std::unique_ptr<Layer>> layers;
  ModelMeta meta;
  TrainConfig config;

  // Batch forward: x is (B, T, n); returns class probabilities (B, c),
  // each row nonnegative and summing to one. The training flag switches
  // batchnorm between batch statistics and frozen running statistics.
  Tensor forward(const Tensor& x, bool training);

  // Same pass without the softmax head; the trainer fuses it into the loss.
  Tensor forward_logits(const Tensor& x, bool training);

  std::vector<ParamRef> params();
  std::vector<ParamRef> state_tensors();
  std::size_t param_count();

  void set_f32(bool on);

  // Per-layer output shapes (batch excluded), in layer order.
  std::vector<std::vector<std::size_t>> layer_shapes() const;
};

// Applies a stable softmax row-wise in place.
void softmax_rows(Tensor& logits);

// The behavior classifier: reshape folding 10 timesteps into channels, three
// conv(kernel 2, valid) + maxpool(3, stride 2, valid) + batchnorm blocks with
// filters 64/128/256 and LeakyReLU 0.3, GRU(128) over the full sequence with
// a trailing batchnorm, flatten, dense softmax head.
Model build_cnn_gru(std::size_t n, std::size_t c, std::size_t T = kWindowLength,
                    const TrainConfig& config = {});

// Recurrent-only ablation: reshape(10), GRU(128) final state, dense softmax.
Model build_gru_only(std::size_t n, std::size_t c, std::size_t T = kWindowLength,
                     const TrainConfig& config = {});

// Scaled-down topology for gradient checking: one conv block at reshape(4)
// keeps four GRU timesteps alive so recurrent kernels carry real gradient.
Model build_small_cnn_gru(std::size_t T, std::size_t n, std::size_t c,
                          const TrainConfig& config = {});

// Flatten + dense head only; linear-layer gradients are exact, which anchors
// the gradcheck tolerance.
Model build_dense_only(std::size_t T, std::size_t n, std::size_t c,
                       const TrainConfig& config = {});

Model build_from_specs(std::vector<LayerSpec> specs, const ModelMeta& meta,
                       const TrainConfig& config);

// Self-describing container ("OSC1"): JSON manifest plus named raw
// little-endian float64 tensor blobs. The dtw-knn model reuses it.
struct Container {
  nlohmann::json manifest;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_container(const Container& c, const std::string& path);
Container load_container(const std::string& path);

void save_model(Model& model, const std::string& path);
Model load_model_file(const std::string& path);

// Reads only the manifest (for /v1/models and model selection).
nlohmann::json load_manifest(const std::string& path);

}  // namespace oscope::nn
