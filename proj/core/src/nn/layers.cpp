#include "oscope/nn/layers.hpp"

#include <cmath>
#include <cstring>

namespace oscope::nn {

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::reshape: return "reshape";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::maxpool1d: return "maxpool1d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::gru: return "gru";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "reshape") return LayerKind::reshape;
  if (s == "conv1d") return LayerKind::conv1d;
  if (s == "maxpool1d") return LayerKind::maxpool1d;
  if (s == "batchnorm") return LayerKind::batchnorm;
  if (s == "gru") return LayerKind::gru;
  if (s == "flatten") return LayerKind::flatten;
  if (s == "dense") return LayerKind::dense;
  throw DataError("unknown layer kind: " + s);
}

namespace {

void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
}

std::size_t batch_of(const Tensor& x, const std::vector<std::size_t>& in_shape) {
  const std::size_t per = Tensor::count(in_shape);
  if (per == 0 || x.size() % per != 0)
    throw DataError("layer input does not match expected shape");
  return x.size() / per;
}

std::vector<std::size_t> with_batch(std::size_t b, const std::vector<std::size_t>& s) {
  std::vector<std::size_t> out;
  out.reserve(s.size() + 1);
  out.push_back(b);
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

}  // namespace

// ---------------------------------------------------------------- reshape

void ReshapeLayer::init(const std::vector<std::size_t>& in, Rng&) {
  if (in.size() != 2) throw DataError("reshape: expects (T, n) input");
  const std::size_t T = in[0], n = in[1];
  if (spec_.fold == 0 || T % spec_.fold != 0)
    throw DataError("reshape: T must be divisible by the fold factor");
  in_shape_ = in;
  out_shape_ = {T / spec_.fold, spec_.fold * n};
}

Tensor ReshapeLayer::forward(const Tensor& x, bool) {
  const std::size_t B = batch_of(x, in_shape_);
  return x.reshaped(with_batch(B, out_shape_));
}

Tensor ReshapeLayer::backward(const Tensor& dy) {
  const std::size_t B = batch_of(dy, out_shape_);
  return dy.reshaped(with_batch(B, in_shape_));
}

// ----------------------------------------------------------------- conv1d

void Conv1DLayer::init(const std::vector<std::size_t>& in, Rng& rng) {
  if (in.size() != 2) throw DataError("conv1d: expects (L, C) input");
  const std::size_t L = in[0], C = in[1];
  if (spec_.kernel == 0 || spec_.filters == 0 || spec_.stride != 1)
    throw DataError("conv1d: kernel/filters must be positive, stride 1");
  if (L < spec_.kernel) throw DataError("conv1d: input shorter than kernel");
  in_shape_ = in;
  out_shape_ = {L - spec_.kernel + 1, spec_.filters};
  w_ = Tensor({spec_.kernel * C, spec_.filters});
  b_ = Tensor({spec_.filters});
  glorot_fill(w_, spec_.kernel * C, spec_.filters, rng);
  dw_ = Tensor(w_.shape);
  db_ = Tensor(b_.shape);
}

Tensor Conv1DLayer::forward(const Tensor& x, bool training) {
  const std::size_t B = batch_of(x, in_shape_);
  const std::size_t L = in_shape_[0], C = in_shape_[1];
  const std::size_t Lout = out_shape_[0], F = spec_.filters, K = spec_.kernel;

  // im2col: adjacent timesteps are contiguous, so each patch is one memcpy.
  Tensor patches({B * Lout, K * C});
  for (std::size_t b = 0; b < B; ++b) {
    const double* src = x.data.data() + b * L * C;
    double* dst = patches.data.data() + b * Lout * K * C;
    for (std::size_t t = 0; t < Lout; ++t)
      std::memcpy(dst + t * K * C, src + t * C, K * C * sizeof(double));
  }

  Tensor out(with_batch(B, out_shape_));
  gemm_into(out.mat(B * Lout, F), patches.mat(B * Lout, K * C), w_.mat(K * C, F), f32);
  out.mat(B * Lout, F).rowwise() += b_.vec().transpose();

  const double slope = spec_.leaky_slope;
  for (double& v : out.data)
    if (v < 0) v *= slope;

  if (training) {
    patches_ = std::move(patches);
    out_cache_ = out;
    batch_ = B;
  }
  return out;
}

Tensor Conv1DLayer::backward(const Tensor& dy) {
  const std::size_t B = batch_, L = in_shape_[0], C = in_shape_[1];
  const std::size_t Lout = out_shape_[0], F = spec_.filters, K = spec_.kernel;
  const double slope = spec_.leaky_slope;

  // LeakyReLU is monotone with positive slope, so the cached output sign
  // recovers the pre-activation sign.
  Tensor dpre = dy;
  for (std::size_t i = 0; i < dpre.data.size(); ++i)
    if (out_cache_.data[i] <= 0) dpre.data[i] *= slope;

  gemm_into(dw_.mat(K * C, F), patches_.mat(B * Lout, K * C).transpose(), dpre.mat(B * Lout, F),
            f32);
  db_.vec() = dpre.mat(B * Lout, F).colwise().sum().transpose();

  Tensor dpatches({B * Lout, K * C});
  gemm_into(dpatches.mat(B * Lout, K * C), dpre.mat(B * Lout, F), w_.mat(K * C, F).transpose(),
            f32);

  Tensor dx(with_batch(B, in_shape_));
  for (std::size_t b = 0; b < B; ++b) {
    const double* src = dpatches.data.data() + b * Lout * K * C;
    double* dst = dx.data.data() + b * L * C;
    for (std::size_t t = 0; t < Lout; ++t) {
      const double* row = src + t * K * C;
      double* at = dst + t * C;
      for (std::size_t i = 0; i < K * C; ++i) at[i] += row[i];
    }
  }
  return dx;
}

std::vector<ParamRef> Conv1DLayer::params() {
  return {{"w", &w_, &dw_}, {"b", &b_, &db_}};
}

// -------------------------------------------------------------- maxpool1d

void MaxPool1DLayer::init(const std::vector<std::size_t>& in, Rng&) {
  if (in.size() != 2) throw DataError("maxpool1d: expects (L, C) input");
  const std::size_t L = in[0], C = in[1];
  if (spec_.kernel == 0 || spec_.stride == 0) throw DataError("maxpool1d: bad kernel/stride");
  if (L < spec_.kernel) throw DataError("maxpool1d: input shorter than kernel");
  in_shape_ = in;
  out_shape_ = {(L - spec_.kernel) / spec_.stride + 1, C};
}

Tensor MaxPool1DLayer::forward(const Tensor& x, bool training) {
  const std::size_t B = batch_of(x, in_shape_);
  const std::size_t L = in_shape_[0], C = in_shape_[1];
  const std::size_t Lout = out_shape_[0], K = spec_.kernel, S = spec_.stride;

  Tensor out(with_batch(B, out_shape_));
  if (training) argmax_.assign(B * Lout * C, 0);

  for (std::size_t b = 0; b < B; ++b) {
    const double* src = x.data.data() + b * L * C;
    double* dst = out.data.data() + b * Lout * C;
    for (std::size_t o = 0; o < Lout; ++o) {
      const double* win = src + o * S * C;
      double* row = dst + o * C;
      std::memcpy(row, win, C * sizeof(double));
      if (training) {
        std::uint8_t* am = argmax_.data() + (b * Lout + o) * C;
        for (std::size_t j = 1; j < K; ++j)
          for (std::size_t c = 0; c < C; ++c)
            if (win[j * C + c] > row[c]) {
              row[c] = win[j * C + c];
              am[c] = static_cast<std::uint8_t>(j);
            }
      } else {
        for (std::size_t j = 1; j < K; ++j)
          for (std::size_t c = 0; c < C; ++c) row[c] = std::max(row[c], win[j * C + c]);
      }
    }
  }
  batch_ = B;
  return out;
}

Tensor MaxPool1DLayer::backward(const Tensor& dy) {
  const std::size_t B = batch_, L = in_shape_[0], C = in_shape_[1];
  const std::size_t Lout = out_shape_[0], S = spec_.stride;

  Tensor dx(with_batch(B, in_shape_));
  (void)L;
  for (std::size_t b = 0; b < B; ++b) {
    const double* g = dy.data.data() + b * Lout * C;
    double* dst = dx.data.data() + b * in_shape_[0] * C;
    const std::uint8_t* am = argmax_.data() + b * Lout * C;
    for (std::size_t o = 0; o < Lout; ++o)
      for (std::size_t c = 0; c < C; ++c)
        dst[(o * S + am[o * C + c]) * C + c] += g[o * C + c];
  }
  return dx;
}

// -------------------------------------------------------------- batchnorm

void BatchNormLayer::init(const std::vector<std::size_t>& in, Rng&) {
  if (in.empty()) throw DataError("batchnorm: empty input shape");
  const std::size_t C = in.back();
  in_shape_ = in;
  out_shape_ = in;
  gamma_ = Tensor({C});
  beta_ = Tensor({C});
  running_mean_ = Tensor({C});
  running_var_ = Tensor({C});
  std::fill(gamma_.data.begin(), gamma_.data.end(), 1.0);
  std::fill(running_var_.data.begin(), running_var_.data.end(), 1.0);
  dgamma_ = Tensor(gamma_.shape);
  dbeta_ = Tensor(beta_.shape);
}

Tensor BatchNormLayer::forward(const Tensor& x, bool training) {
  const std::size_t C = in_shape_.back();
  const std::size_t N = x.size() / C;
  const double eps = spec_.bn_epsilon;

  Tensor out = x;
  auto X = out.mat(N, C);

  if (training) {
    Eigen::VectorXd mu = X.colwise().mean().transpose();
    Eigen::VectorXd var(static_cast<Eigen::Index>(C));
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(C); ++c)
      var(c) = (X.col(c).array() - mu(c)).square().mean();
    inv_std_ = (var.array() + eps).rsqrt().matrix();

    X.rowwise() -= mu.transpose();
    X = (X.array().rowwise() * inv_std_.transpose().array()).matrix();
    xhat_ = out;  // normalized values, pre scale/shift
    rows_ = N;

    const double m = spec_.bn_momentum;
    running_mean_.vec() = m * running_mean_.vec() + (1.0 - m) * mu;
    running_var_.vec() = m * running_var_.vec() + (1.0 - m) * var;

    X = (X.array().rowwise() * gamma_.vec().transpose().array()).matrix();
    X.rowwise() += beta_.vec().transpose();
  } else {
    Eigen::VectorXd istd = (running_var_.vec().array() + eps).rsqrt().matrix();
    Eigen::VectorXd scale = (gamma_.vec().array() * istd.array()).matrix();
    Eigen::VectorXd shift =
        (beta_.vec().array() - running_mean_.vec().array() * scale.array()).matrix();
    X = (X.array().rowwise() * scale.transpose().array()).matrix();
    X.rowwise() += shift.transpose();
  }
  return out;
}

Tensor BatchNormLayer::backward(const Tensor& dy) {
  const std::size_t C = in_shape_.back();
  const std::size_t N = rows_;
  const double n = static_cast<double>(N);

  auto DY = dy.mat(N, C);
  auto XH = xhat_.mat(N, C);

  dbeta_.vec() = DY.colwise().sum().transpose();
  dgamma_.vec() = (DY.array() * XH.array()).colwise().sum().transpose();

  // dxhat = dy o gamma;
  // dx = inv_std/N * (N*dxhat - colsum(dxhat) - xhat o colsum(dxhat o xhat))
  Tensor dx(dy.shape);
  auto DX = dx.mat(N, C);
  Eigen::VectorXd dxhat_sum(static_cast<Eigen::Index>(C));
  Eigen::VectorXd dxhat_xhat_sum(static_cast<Eigen::Index>(C));
  {
    Mat dxhat = (DY.array().rowwise() * gamma_.vec().transpose().array()).matrix();
    dxhat_sum = dxhat.colwise().sum().transpose();
    dxhat_xhat_sum = (dxhat.array() * XH.array()).colwise().sum().transpose();
    DX = n * dxhat;
  }
  DX.rowwise() -= dxhat_sum.transpose();
  DX -= (XH.array().rowwise() * dxhat_xhat_sum.transpose().array()).matrix();
  DX = (DX.array().rowwise() * (inv_std_.transpose().array() / n)).matrix();
  return dx;
}

std::vector<ParamRef> BatchNormLayer::params() {
  return {{"gamma", &gamma_, &dgamma_}, {"beta", &beta_, &dbeta_}};
}

std::vector<ParamRef> BatchNormLayer::state_tensors() {
  return {{"running_mean", &running_mean_, nullptr}, {"running_var", &running_var_, nullptr}};
}

// -------------------------------------------------------------------- gru

void GruLayer::init(const std::vector<std::size_t>& in, Rng& rng) {
  if (in.size() != 2) throw DataError("gru: expects (L, C) input");
  const std::size_t C = in[1], H = spec_.units;
  if (H == 0) throw DataError("gru: units must be positive");
  in_shape_ = in;
  out_shape_ = spec_.return_sequences ? std::vector<std::size_t>{in[0], H}
                                      : std::vector<std::size_t>{H};
  w_ = Tensor({C, 3 * H});
  u_zr_ = Tensor({H, 2 * H});
  u_g_ = Tensor({H, H});
  b_ = Tensor({3 * H});
  glorot_fill(w_, C, 3 * H, rng);
  glorot_fill(u_zr_, H, 2 * H, rng);
  glorot_fill(u_g_, H, H, rng);
  dw_ = Tensor(w_.shape);
  du_zr_ = Tensor(u_zr_.shape);
  du_g_ = Tensor(u_g_.shape);
  db_ = Tensor(b_.shape);
}

Tensor GruLayer::forward(const Tensor& x, bool training) {
  const std::size_t B = batch_of(x, in_shape_);
  const std::size_t L = in_shape_[0], C = in_shape_[1], H = spec_.units;

  // Time-major copy so each step is a contiguous (B, C) block.
  Tensor x_tm({L, B, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < L; ++t)
      std::memcpy(x_tm.data.data() + (t * B + b) * C, x.data.data() + (b * L + t) * C,
                  C * sizeof(double));

  Tensor xw({L * B, 3 * H});
  gemm_into(xw.mat(L * B, 3 * H), x_tm.mat(L * B, C), w_.mat(C, 3 * H), f32);
  xw.mat(L * B, 3 * H).rowwise() += b_.vec().transpose();

  Tensor h_tm({L + 1, B, H});
  Tensor z_tm({L, B, H}), r_tm({L, B, H}), g_tm({L, B, H});

  Mat hu(B, 2 * H), rh(B, H), gu(B, H);
  for (std::size_t t = 0; t < L; ++t) {
    CMatMap h_prev(h_tm.data.data() + t * B * H, B, H);
    MatMap z(z_tm.data.data() + t * B * H, B, H);
    MatMap r(r_tm.data.data() + t * B * H, B, H);
    MatMap g(g_tm.data.data() + t * B * H, B, H);
    MatMap h_next(h_tm.data.data() + (t + 1) * B * H, B, H);
    CMatMap a(xw.data.data() + t * B * 3 * H, B, 3 * H);

    gemm_into(hu, h_prev, u_zr_.mat(H, 2 * H), f32);
    z = (1.0 + (-(a.leftCols(H) + hu.leftCols(H))).array().exp()).inverse().matrix();
    r = (1.0 + (-(a.middleCols(H, H) + hu.rightCols(H))).array().exp()).inverse().matrix();

    rh = (r.array() * h_prev.array()).matrix();
    gemm_into(gu, rh, u_g_.mat(H, H), f32);
    g = (a.rightCols(H) + gu).array().tanh().matrix();

    h_next = ((1.0 - z.array()) * h_prev.array() + z.array() * g.array()).matrix();
  }

  Tensor out;
  if (spec_.return_sequences) {
    out = Tensor({B, L, H});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < L; ++t)
        std::memcpy(out.data.data() + (b * L + t) * H, h_tm.data.data() + ((t + 1) * B + b) * H,
                    H * sizeof(double));
  } else {
    out = Tensor({B, H});
    std::memcpy(out.data.data(), h_tm.data.data() + L * B * H, B * H * sizeof(double));
  }

  if (training) {
    x_tm_ = std::move(x_tm);
    h_tm_ = std::move(h_tm);
    z_tm_ = std::move(z_tm);
    r_tm_ = std::move(r_tm);
    g_tm_ = std::move(g_tm);
    batch_ = B;
  }
  return out;
}

Tensor GruLayer::backward(const Tensor& dy) {
  const std::size_t B = batch_, L = in_shape_[0], C = in_shape_[1], H = spec_.units;

  dw_.zero();
  du_zr_.zero();
  du_g_.zero();
  db_.zero();

  Tensor da_tm({L, B, 3 * H});  // pre-activation grads, all gates
  Mat dh = Mat::Zero(B, H);     // carry into step t from t+1
  Mat drh(B, H), rh(B, H), carry(B, H), dag_m(B, H);

  for (std::size_t t = L; t-- > 0;) {
    CMatMap h_prev(h_tm_.data.data() + t * B * H, B, H);
    CMatMap z(z_tm_.data.data() + t * B * H, B, H);
    CMatMap r(r_tm_.data.data() + t * B * H, B, H);
    CMatMap g(g_tm_.data.data() + t * B * H, B, H);

    if (spec_.return_sequences) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < H; ++c)
          dh(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c)) +=
              dy.data[(b * L + t) * H + c];
    } else if (t == L - 1) {
      dh += CMatMap(dy.data.data(), B, H);
    }

    MatMap da(da_tm.data.data() + t * B * 3 * H, B, 3 * H);

    da.leftCols(H) =
        (dh.array() * (g.array() - h_prev.array()) * z.array() * (1.0 - z.array())).matrix();
    dag_m = (dh.array() * z.array() * (1.0 - g.array().square())).matrix();
    da.rightCols(H) = dag_m;

    gemm_into(drh, dag_m, u_g_.mat(H, H).transpose(), f32);
    da.middleCols(H, H) =
        (drh.array() * h_prev.array() * r.array() * (1.0 - r.array())).matrix();

    rh = (r.array() * h_prev.array()).matrix();
    gemm_acc(du_zr_.mat(H, 2 * H), h_prev.transpose(), da.leftCols(2 * H));
    gemm_acc(du_g_.mat(H, H), rh.transpose(), dag_m);

    gemm_into(carry, da.leftCols(2 * H), u_zr_.mat(H, 2 * H).transpose(), f32);
    dh = (dh.array() * (1.0 - z.array()) + carry.array() + drh.array() * r.array()).matrix();
  }

  db_.vec() = da_tm.mat(L * B, 3 * H).colwise().sum().transpose();
  gemm_into(dw_.mat(C, 3 * H), x_tm_.mat(L * B, C).transpose(), da_tm.mat(L * B, 3 * H), f32);

  Tensor dx_tm({L * B, C});
  gemm_into(dx_tm.mat(L * B, C), da_tm.mat(L * B, 3 * H), w_.mat(C, 3 * H).transpose(), f32);

  Tensor dx({B, L, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < L; ++t)
      std::memcpy(dx.data.data() + (b * L + t) * C, dx_tm.data.data() + (t * B + b) * C,
                  C * sizeof(double));
  return dx;
}

std::vector<ParamRef> GruLayer::params() {
  return {{"w", &w_, &dw_}, {"u_zr", &u_zr_, &du_zr_}, {"u_g", &u_g_, &du_g_}, {"b", &b_, &db_}};
}

// ---------------------------------------------------------------- flatten

void FlattenLayer::init(const std::vector<std::size_t>& in, Rng&) {
  in_shape_ = in;
  out_shape_ = {Tensor::count(in)};
}

Tensor FlattenLayer::forward(const Tensor& x, bool) {
  const std::size_t B = batch_of(x, in_shape_);
  return x.reshaped({B, out_shape_[0]});
}

Tensor FlattenLayer::backward(const Tensor& dy) {
  const std::size_t B = batch_of(dy, out_shape_);
  return dy.reshaped(with_batch(B, in_shape_));
}

// ------------------------------------------------------------------ dense

void DenseLayer::init(const std::vector<std::size_t>& in, Rng& rng) {
  if (in.size() != 1) throw DataError("dense: expects flat input");
  const std::size_t D = in[0], U = spec_.units;
  if (U == 0) throw DataError("dense: units must be positive");
  in_shape_ = in;
  out_shape_ = {U};
  w_ = Tensor({D, U});
  b_ = Tensor({U});
  glorot_fill(w_, D, U, rng);
  dw_ = Tensor(w_.shape);
  db_ = Tensor(b_.shape);
}

Tensor DenseLayer::forward(const Tensor& x, bool training) {
  const std::size_t B = batch_of(x, in_shape_);
  const std::size_t D = in_shape_[0], U = spec_.units;
  Tensor out({B, U});
  gemm_into(out.mat(B, U), x.mat(B, D), w_.mat(D, U), f32);
  out.mat(B, U).rowwise() += b_.vec().transpose();
  if (training) {
    x_cache_ = x;
    batch_ = B;
  }
  return out;
}

Tensor DenseLayer::backward(const Tensor& dy) {
  const std::size_t B = batch_, D = in_shape_[0], U = spec_.units;
  gemm_into(dw_.mat(D, U), x_cache_.mat(B, D).transpose(), dy.mat(B, U), f32);
  db_.vec() = dy.mat(B, U).colwise().sum().transpose();
  Tensor dx({B, D});
  gemm_into(dx.mat(B, D), dy.mat(B, U), w_.mat(D, U).transpose(), f32);
  return dx;
}

std::vector<ParamRef> DenseLayer::params() {
  return {{"w", &w_, &dw_}, {"b", &b_, &db_}};
}

// ---------------------------------------------------------------- factory

std::unique_ptr<Layer> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::reshape: return std::make_unique<ReshapeLayer>(spec);
    case LayerKind::conv1d: return std::make_unique<Conv1DLayer>(spec);
    case LayerKind::maxpool1d: return std::make_unique<MaxPool1DLayer>(spec);
    case LayerKind::batchnorm: return std::make_unique<BatchNormLayer>(spec);
    case LayerKind::gru: return std::make_unique<GruLayer>(spec);
    case LayerKind::flatten: return std::make_unique<FlattenLayer>(spec);
    case LayerKind::dense: return std::make_unique<DenseLayer>(spec);
  }
  throw DataError("make_layer: bad kind");
}

}  // namespace oscope::nn
