#pragma once

#include <memory>
#include <string>
#include <vector>

#include "oscope/nn/tensor.hpp"
#include "oscope/rng.hpp"

namespace oscope::nn {

enum class LayerKind { reshape, conv1d, maxpool1d, batchnorm, gru, flatten, dense };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t fold = 0;           // reshape: timesteps folded into channels
  std::size_t filters = 0;        // conv1d
  std::size_t kernel = 0;         // conv1d / maxpool1d
  std::size_t stride = 1;         // conv1d / maxpool1d
  double leaky_slope = 0.0;       // conv1d LeakyReLU (0 = linear)
  std::size_t units = 0;          // gru / dense
  bool return_sequences = true;   // gru
  bool softmax = false;           // dense head; softmax applied by the model
  double bn_momentum = 0.99;      // batchnorm
  double bn_epsilon = 1e-3;       // batchnorm
};

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

// Shapes below exclude the batch dimension; runtime tensors carry it in
// front. Training-mode forward caches whatever backward needs; layers are
// therefore not reentrant across batches, matching single-threaded training.
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }
  const std::vector<std::size_t>& input_shape() const { return in_shape_; }
  const std::vector<std::size_t>& output_shape() const { return out_shape_; }

  virtual void init(const std::vector<std::size_t>& in_shape, Rng& rng) = 0;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual std::vector<ParamRef> params() { return {}; }
  virtual std::vector<ParamRef> state_tensors() { return {}; }  // e.g. running stats

  bool f32 = false;  // compute-precision hint for the heavy products

 protected:
  LayerSpec spec_;
  std::vector<std::size_t> in_shape_, out_shape_;
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec);

// Folds spec.fold consecutive timesteps into channels: (T, n) -> (T/fold, fold*n).
// Row-major layout makes this a metadata-only change.
class ReshapeLayer final : public Layer {
 public:
  using Layer::Layer;
  void init(const std::vector<std::size_t>& in, Rng&) override;
  Tensor forward(const Tensor& x, bool) override;
  Tensor backward(const Tensor& dy) override;
};

// Valid (no padding) 1-D convolution over time with LeakyReLU activation.
class Conv1DLayer final : public Layer {
 public:
  using Layer::Layer;
  void init(const std::vector<std::size_t>& in, Rng& rng) override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<ParamRef> params() override;

  Tensor w_;  // (kernel*Cin, filters)
  Tensor b_;  // (filters)

 private:
  Tensor dw_, db_;
  Tensor patches_;  // cached im2col, (B*Lout, kernel*Cin)
  Tensor out_cache_;
  std::size_t batch_ = 0;
};

// Valid max pooling over time, argmax remembered for backward.
class MaxPool1DLayer final : public Layer {
 public:
  using Layer::Layer;
  void init(const std::vector<std::size_t>& in, Rng&) override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& dy) override;

 private:
  std::vector<std::uint8_t> argmax_;
  std::size_t batch_ = 0;
};

// Per-channel batch normalization over all (batch, time) positions. Training
// uses batch statistics and updates the running averages; inference applies
// the frozen running statistics as an affine map.
class BatchNormLayer final : public Layer {
 public:
  using Layer::Layer;
  void init(const std::vector<std::size_t>& in, Rng&) override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<ParamRef> params() override;
  std::vector<ParamRef> state_tensors() override;

  Tensor gamma_, beta_;
  Tensor running_mean_, running_var_;

 private:
  Tensor dgamma_, dbeta_;
  Tensor xhat_;
  Eigen::VectorXd inv_std_;
  std::size_t rows_ = 0;
};

// Gated recurrent unit, h0 = 0:
//   z = sigmoid(x Wz + h Uz + bz)
//   r = sigmoid(x Wr + h Ur + br)
//   g = tanh(x Wh + (r o h) Uh + bh)
//   h' = (1 - z) o h + z o g
// Input kernels are packed (Cin, 3H) in z, r, g order; recurrent kernels are
// split so the candidate product can apply the reset gate first.
class GruLayer final : public Layer {
 public:
  using Layer::Layer;
  void init(const std::vector<std::size_t>& in, Rng& rng) override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<ParamRef> params() override;

  Tensor w_;     // (Cin, 3H)
  Tensor u_zr_;  // (H, 2H)
  Tensor u_g_;   // (H, H)
  Tensor b_;     // (3H)

 private:
  Tensor dw_, du_zr_, du_g_, db_;
  // Time-major caches: x (L,B,Cin), h (L+1,B,H), gates z/r/g (L,B,H).
  Tensor x_tm_, h_tm_, z_tm_, r_tm_, g_tm_;
  std::size_t batch_ = 0;
};

class FlattenLayer final : public Layer {
 public:
  using Layer::Layer;
  void init(const std::vector<std::size_t>& in, Rng&) override;
  Tensor forward(const Tensor& x, bool) override;
  Tensor backward(const Tensor& dy) override;
};

class DenseLayer final : public Layer {
 public:
  using Layer::Layer;
  void init(const std::vector<std::size_t>& in, Rng& rng) override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<ParamRef> params() override;

  Tensor w_;  // (D, units)
  Tensor b_;  // (units)

 private:
  Tensor dw_, db_;
  Tensor x_cache_;
  std::size_t batch_ = 0;
};

}  // namespace oscope::nn
