#include "oscope/nn/train.hpp"

#include <chrono>
#include <cmath>

namespace oscope::nn {

double sparse_ce_loss(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits) {
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  if (labels.size() != B) throw DataError("loss: label count does not match batch");

  if (dlogits) *dlogits = Tensor(logits.shape);
  double total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = logits.data.data() + b * C;
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw DataError("loss: label " + std::to_string(y) + " out of range");
    double mx = row[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double sum = 0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
    const double lse = std::log(sum) + mx;
    total += lse - row[y];
    if (dlogits) {
      double* g = dlogits->data.data() + b * C;
      for (std::size_t c = 0; c < C; ++c)
        g[c] = (std::exp(row[c] - lse) - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) /
               static_cast<double>(B);
    }
  }
  return total / static_cast<double>(B);
}

namespace {

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-7;
  std::size_t step = 0;
  std::vector<Tensor> m, v;

  void init(const std::vector<ParamRef>& params) {
    for (const auto& p : params) {
      m.emplace_back(p.value->shape);
      v.emplace_back(p.value->shape);
    }
  }

  void update(const std::vector<ParamRef>& params, double lr) {
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      double* w = params[i].value->data.data();
      const double* g = params[i].grad->data.data();
      double* mi = m[i].data.data();
      double* vi = v[i].data.data();
      const std::size_t count = params[i].value->size();
      for (std::size_t k = 0; k < count; ++k) {
        mi[k] = beta1 * mi[k] + (1.0 - beta1) * g[k];
        vi[k] = beta2 * vi[k] + (1.0 - beta2) * g[k] * g[k];
        const double mhat = mi[k] / bc1;
        const double vhat = vi[k] / bc2;
        w[k] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

void fill_window(const Model& model, const Window& w, double* dst) {
  if (w.n_features() != model.meta.n || w.T != model.meta.T)
    throw DataError("window shape does not match model input");
  prep::NormalizedWindow nw = prep::normalize(w, model.meta.norm);
  std::copy(nw.values.begin(), nw.values.end(), dst);
}

TrainHistory train_impl(Model& model, const std::function<const Window&(std::size_t)>& window_at,
                        const std::vector<int>& all_labels, std::size_t count,
                        const ProgressFn& progress) {
  if (count == 0) throw DataError("train: empty training split");
  const std::size_t per = model.meta.T * model.meta.n;
  const std::size_t batch = std::max<std::size_t>(1, model.config.batch_size);

  auto params = model.params();
  AdamState adam;
  adam.init(params);

  Rng shuffle_rng(splitmix64(model.config.seed ^ 0x747261696e6f7263ULL));
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;

  TrainHistory history;
  for (std::size_t epoch = 0; epoch < model.config.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < count; start += batch) {
      const std::size_t bsz = std::min(batch, count - start);
      Tensor x({bsz, model.meta.T, model.meta.n});
      std::vector<int> labels(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        const std::size_t idx = order[start + i];
        fill_window(model, window_at(idx), x.data.data() + i * per);
        labels[i] = all_labels[idx];
      }

      Tensor logits = model.forward_logits(x, true);
      Tensor dlogits;
      const double loss = sparse_ce_loss(logits, labels, &dlogits);
      if (!std::isfinite(loss))
        throw RuntimeFailure("train: non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(bsz);

      for (std::size_t i = 0; i < bsz; ++i) {
        const double* row = logits.data.data() + i * model.meta.c;
        std::size_t best = 0;
        for (std::size_t c = 1; c < model.meta.c; ++c)
          if (row[c] > row[best]) best = c;
        if (best == static_cast<std::size_t>(labels[i])) ++correct;
      }

      Tensor grad = dlogits;
      for (std::size_t li = model.layers.size(); li-- > 0;)
        grad = model.layers[li]->backward(grad);
      adam.update(params, model.config.learning_rate);
    }

    EpochStats stats{epoch, loss_sum / static_cast<double>(count),
                     static_cast<double>(correct) / static_cast<double>(count)};
    history.epochs.push_back(stats);
    if (progress) progress(stats);
  }
  return history;
}

}  // namespace

TrainHistory train(Model& model, const Dataset& ds, const ProgressFn& progress) {
  if (ds.train_indices.empty()) throw DataError("train: dataset has no training split");
  std::vector<int> labels(ds.train_indices.size());
  for (std::size_t i = 0; i < ds.train_indices.size(); ++i) {
    const auto& w = ds.windows[ds.train_indices[i]];
    if (!w.label) throw DataError("train: unlabeled window");
    labels[i] = w.label->id;
  }
  auto window_at = [&](std::size_t i) -> const Window& {
    return ds.windows[ds.train_indices[i]];
  };
  return train_impl(model, window_at, labels, ds.train_indices.size(), progress);
}

TrainHistory train_tensors(Model& model, const Tensor& x, const std::vector<int>& labels,
                           const ProgressFn& progress) {
  // Wraps rows of x as windows already normalized by the caller.
  const std::size_t per = model.meta.T * model.meta.n;
  const std::size_t count = x.size() / per;
  if (labels.size() != count) throw DataError("train_tensors: label count mismatch");

  std::vector<Window> storage(count);
  for (std::size_t i = 0; i < count; ++i) {
    Window& w = storage[i];
    w.T = model.meta.T;
    w.features.resize(model.meta.n);
    w.values.assign(x.data.begin() + static_cast<long>(i * per),
                    x.data.begin() + static_cast<long>((i + 1) * per));
  }
  Model* m = &model;
  const prep::NormMethod saved = m->meta.norm;
  m->meta.norm = prep::NormMethod::none;  // caller's values pass through
  auto window_at = [&](std::size_t i) -> const Window& { return storage[i]; };
  TrainHistory h = train_impl(model, window_at, labels, count, progress);
  m->meta.norm = saved;
  return h;
}

EvalResult evaluate(Model& model, const Dataset& ds, bool test_split, std::size_t batch) {
  const auto& indices = test_split ? ds.test_indices : ds.train_indices;
  if (indices.empty()) throw DataError("evaluate: empty split");
  const std::size_t c = model.meta.c;
  const std::size_t per = model.meta.T * model.meta.n;

  EvalResult result;
  result.confusion.assign(c * c, 0);
  result.total = indices.size();

  using clock = std::chrono::steady_clock;
  double latency_sum = 0;

  for (std::size_t start = 0; start < indices.size(); start += batch) {
    const std::size_t bsz = std::min(batch, indices.size() - start);
    Tensor x({bsz, model.meta.T, model.meta.n});
    std::vector<int> truth(bsz);
    for (std::size_t i = 0; i < bsz; ++i) {
      const Window& w = ds.windows[indices[start + i]];
      if (!w.label) throw DataError("evaluate: unlabeled window");
      fill_window(model, w, x.data.data() + i * per);
      truth[i] = w.label->id;
    }
    const auto t0 = clock::now();
    Tensor probs = model.forward(x, false);
    const auto t1 = clock::now();
    latency_sum += static_cast<double>(
        std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count());

    for (std::size_t i = 0; i < bsz; ++i) {
      const double* row = probs.data.data() + i * c;
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k)
        if (row[k] > row[best]) best = k;
      if (static_cast<int>(best) == truth[i]) ++result.correct;
      result.confusion[static_cast<std::size_t>(truth[i]) * c + best]++;
    }
  }
  result.accuracy = static_cast<double>(result.correct) / static_cast<double>(result.total);
  result.mean_latency_us = latency_sum / static_cast<double>(result.total);
  return result;
}

ClassificationResult classify(Model& model, const prep::NormalizedWindow& window) {
  if (window.features.size() != model.meta.n || window.T != model.meta.T)
    throw DataError("classify: window shape does not match model");

  Tensor x({1, model.meta.T, model.meta.n});
  std::copy(window.values.begin(), window.values.end(), x.data.begin());

  const auto t0 = std::chrono::steady_clock::now();
  Tensor probs = model.forward(x, false);
  const auto t1 = std::chrono::steady_clock::now();

  ClassificationResult result;
  result.probabilities.assign(probs.data.begin(), probs.data.end());
  const std::size_t best = argmax_lowest_id(result.probabilities);
  result.label.id = static_cast<int>(best);
  result.label.name =
      best < model.meta.classes.size() ? model.meta.classes[best] : std::to_string(best);
  result.latency_us =
      std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count();
  return result;
}

Tensor batch_from_windows(const Model& model, const Dataset& ds,
                          const std::vector<std::size_t>& indices, std::vector<int>* labels) {
  const std::size_t per = model.meta.T * model.meta.n;
  Tensor x({indices.size(), model.meta.T, model.meta.n});
  if (labels) labels->resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Window& w = ds.windows[indices[i]];
    fill_window(model, w, x.data.data() + i * per);
    if (labels) (*labels)[i] = w.label ? w.label->id : -1;
  }
  return x;
}

}  // namespace oscope::nn
