#include "oscope/dtwknn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <map>

#include "oscope/nn/model.hpp"

namespace oscope::dtw {

double dtw_distance(std::span<const double> x, std::span<const double> y, std::size_t band,
                    double cutoff) {
  const std::size_t n = x.size(), m = y.size();
  if (n == 0 || m == 0) throw DataError("dtw: empty series");

  std::size_t b = band;
  if (b != kNoBand) {
    const std::size_t len_gap = n > m ? n - m : m - n;
    b = std::max(b, len_gap);  // keep the end cell reachable
  }

  std::vector<double> prev(m + 1, kInf), cur(m + 1, kInf);
  prev[0] = 0.0;

  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t j_lo = b == kNoBand ? 1 : (i > b ? i - b : 1);
    const std::size_t j_hi = b == kNoBand ? m : std::min(m, i + b);
    cur[j_lo - 1] = kInf;
    double row_min = kInf;
    const double xi = x[i - 1];
    for (std::size_t j = j_lo; j <= j_hi; ++j) {
      const double best = std::min({prev[j], cur[j - 1], prev[j - 1]});
      const double d = std::fabs(xi - y[j - 1]) + best;
      cur[j] = d;
      row_min = std::min(row_min, d);
    }
    if (j_hi < m) cur[j_hi + 1] = kInf;
    if (row_min > cutoff) return kInf;
    std::swap(prev, cur);
  }
  return prev[m];
}

void band_envelope(std::span<const double> q, std::size_t band, std::vector<double>& upper,
                   std::vector<double>& lower) {
  const std::size_t T = q.size();
  upper.resize(T);
  lower.resize(T);
  const std::size_t r = band == kNoBand ? T : band;

  // Monotonic deques over the sliding window [t-r, t+r].
  std::deque<std::size_t> maxd, mind;
  std::size_t right = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t hi = std::min(T - 1, t + r);
    for (; right <= hi; ++right) {
      while (!maxd.empty() && q[maxd.back()] <= q[right]) maxd.pop_back();
      maxd.push_back(right);
      while (!mind.empty() && q[mind.back()] >= q[right]) mind.pop_back();
      mind.push_back(right);
    }
    const std::size_t lo = t >= r ? t - r : 0;
    while (maxd.front() < lo) maxd.pop_front();
    while (mind.front() < lo) mind.pop_front();
    upper[t] = q[maxd.front()];
    lower[t] = q[mind.front()];
  }
}

double lb_keogh(std::span<const double> upper, std::span<const double> lower,
                std::span<const double> candidate) {
  if (upper.size() != candidate.size()) throw DataError("lb_keogh: length mismatch");
  double acc = 0;
  for (std::size_t t = 0; t < candidate.size(); ++t) {
    const double c = candidate[t];
    if (c > upper[t]) acc += c - upper[t];
    else if (c < lower[t]) acc += lower[t] - c;
  }
  return acc;
}

KnnModel knn_build(const Dataset& ds, const KnnConfig& config) {
  if (ds.train_indices.empty()) throw DataError("knn_build: dataset has no training split");
  if (config.k < 1) throw DataError("knn_build: k must be >= 1");
  if (config.k > ds.train_indices.size())
    throw DataError("knn_build: k exceeds training set size");

  KnnModel model;
  model.config = config;
  model.features = ds.windows.front().features;
  model.T = ds.windows.front().T;
  model.n_classes = ds.n_classes();
  model.classes = ds.class_names();

  const std::size_t n = model.features.size();
  model.series.reserve(ds.train_indices.size());
  model.labels.reserve(ds.train_indices.size());
  for (std::size_t idx : ds.train_indices) {
    const Window& w = ds.windows[idx];
    if (!w.label) throw DataError("knn_build: unlabeled window");
    prep::NormalizedWindow nw = prep::normalize(w, config.norm);
    std::vector<std::vector<double>> cols(n, std::vector<double>(model.T));
    for (std::size_t f = 0; f < n; ++f)
      for (std::size_t t = 0; t < model.T; ++t) cols[f][t] = nw.at(t, f);
    model.series.push_back(std::move(cols));
    model.labels.push_back(w.label->id);
  }
  return model;
}

namespace {

std::vector<std::vector<double>> window_columns(const prep::NormalizedWindow& w) {
  const std::size_t n = w.features.size();
  std::vector<std::vector<double>> cols(n, std::vector<double>(w.T));
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t t = 0; t < w.T; ++t) cols[f][t] = w.at(t, f);
  return cols;
}

double pointwise_l1_dtw(const std::vector<std::vector<double>>& x,
                        const std::vector<std::vector<double>>& y, std::size_t band,
                        double cutoff) {
  const std::size_t n = x[0].size(), m = y[0].size(), F = x.size();
  std::size_t b = band;
  if (b != kNoBand) b = std::max(b, n > m ? n - m : m - n);

  std::vector<double> prev(m + 1, kInf), cur(m + 1, kInf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t j_lo = b == kNoBand ? 1 : (i > b ? i - b : 1);
    const std::size_t j_hi = b == kNoBand ? m : std::min(m, i + b);
    cur[j_lo - 1] = kInf;
    double row_min = kInf;
    for (std::size_t j = j_lo; j <= j_hi; ++j) {
      double c = 0;
      for (std::size_t f = 0; f < F; ++f) c += std::fabs(x[f][i - 1] - y[f][j - 1]);
      const double d = c + std::min({prev[j], cur[j - 1], prev[j - 1]});
      cur[j] = d;
      row_min = std::min(row_min, d);
    }
    if (j_hi < m) cur[j_hi + 1] = kInf;
    if (row_min > cutoff) return kInf;
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

std::vector<Neighbor> knn_nearest(const KnnModel& model,
                                  const std::vector<std::vector<double>>& query,
                                  std::size_t max_k) {
  const std::size_t count = model.size();
  const std::size_t F = model.features.size();
  if (query.size() != F) throw DataError("knn: query feature count mismatch");
  max_k = std::min(max_k, count);

  std::vector<Neighbor> heap;  // max-heap by distance
  heap.reserve(max_k + 1);
  auto cmp = [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; };
  auto cutoff = [&]() { return heap.size() < max_k ? kInf : heap.front().distance; };
  auto push = [&](double d, std::size_t idx) {
    heap.push_back({d, idx});
    std::push_heap(heap.begin(), heap.end(), cmp);
    if (heap.size() > max_k) {
      std::pop_heap(heap.begin(), heap.end(), cmp);
      heap.pop_back();
    }
  };

  if (model.config.agg == FeatureAgg::pointwise_l1) {
    for (std::size_t i = 0; i < count; ++i) {
      const double d = pointwise_l1_dtw(query, model.series[i], model.config.band, cutoff());
      if (d < cutoff()) push(d, i);
    }
  } else {
    // LB_Keogh cascade on the query envelope, cheapest candidates first.
    std::vector<std::vector<double>> upper(F), lower(F);
    for (std::size_t f = 0; f < F; ++f)
      band_envelope(query[f], model.config.band, upper[f], lower[f]);

    std::vector<std::pair<double, std::size_t>> order(count);
    std::vector<std::vector<double>> lbs(count, std::vector<double>(F));
    for (std::size_t i = 0; i < count; ++i) {
      double lb = 0;
      for (std::size_t f = 0; f < F; ++f) {
        lbs[i][f] = lb_keogh(upper[f], lower[f], model.series[i][f]);
        lb += lbs[i][f];
      }
      order[i] = {lb, i};
    }
    std::sort(order.begin(), order.end());

    for (const auto& [lb, i] : order) {
      if (lb >= cutoff()) break;  // every remaining lower bound is larger
      double rest_lb = lb;
      double total = 0;
      bool alive = true;
      for (std::size_t f = 0; f < F && alive; ++f) {
        rest_lb -= lbs[i][f];
        const double budget = cutoff() - total - rest_lb;
        const double d =
            dtw_distance(query[f], model.series[i][f], model.config.band, budget);
        total += d;
        alive = std::isfinite(d) && total + rest_lb < cutoff();
      }
      if (alive) push(total, i);
    }
  }

  std::sort(heap.begin(), heap.end(),
            [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; });
  return heap;
}

namespace {

struct VoteOutcome {
  int label;
  std::vector<double> probabilities;
};

VoteOutcome vote(const KnnModel& model, const std::vector<Neighbor>& neighbors, std::size_t k) {
  const std::size_t kk = std::min(k, neighbors.size());
  std::map<int, std::pair<std::size_t, double>> tally;  // label -> (votes, distance sum)
  for (std::size_t i = 0; i < kk; ++i) {
    const int label = model.labels[neighbors[i].index];
    auto& [votes, dist_sum] = tally[label];
    ++votes;
    dist_sum += neighbors[i].distance;
  }

  int best = -1;
  std::size_t best_votes = 0;
  double best_mean = kInf;
  for (const auto& [label, entry] : tally) {
    const auto& [votes, dist_sum] = entry;
    const double mean = dist_sum / static_cast<double>(votes);
    const bool wins = votes > best_votes ||
                      (votes == best_votes &&
                       (mean < best_mean || (mean == best_mean && label < best)));
    if (wins) {
      best = label;
      best_votes = votes;
      best_mean = mean;
    }
  }

  VoteOutcome out;
  out.label = best;
  out.probabilities.assign(model.n_classes, 0.0);
  for (const auto& [label, entry] : tally)
    if (label >= 0 && static_cast<std::size_t>(label) < model.n_classes)
      out.probabilities[static_cast<std::size_t>(label)] =
          static_cast<double>(entry.first) / static_cast<double>(kk);
  return out;
}

}  // namespace

ClassificationResult knn_classify(const KnnModel& model, const prep::NormalizedWindow& window) {
  if (window.features != model.features) throw DataError("knn_classify: feature list mismatch");
  if (window.T != model.T) throw DataError("knn_classify: window length mismatch");

  const auto t0 = std::chrono::steady_clock::now();
  auto query = window_columns(window);
  auto neighbors = knn_nearest(model, query, model.config.k);
  VoteOutcome outcome = vote(model, neighbors, model.config.k);
  const auto t1 = std::chrono::steady_clock::now();

  ClassificationResult result;
  result.label.id = outcome.label;
  result.label.name = outcome.label >= 0 &&
                              static_cast<std::size_t>(outcome.label) < model.classes.size()
                          ? model.classes[static_cast<std::size_t>(outcome.label)]
                          : std::to_string(outcome.label);
  result.probabilities = std::move(outcome.probabilities);
  result.latency_us = std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count();
  return result;
}

KnnEval knn_eval(const KnnModel& model, const Dataset& ds, const std::vector<std::size_t>& ks,
                 bool test_split) {
  const auto& indices = test_split ? ds.test_indices : ds.train_indices;
  if (indices.empty()) throw DataError("knn_eval: empty split");
  if (ks.empty()) throw DataError("knn_eval: no K values");
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  const std::size_t c = model.n_classes;

  std::vector<std::size_t> correct(ks.size(), 0);
  std::vector<std::vector<std::size_t>> confusion(ks.size(), std::vector<std::size_t>(c * c, 0));

  for (std::size_t idx : indices) {
    const Window& w = ds.windows[idx];
    if (!w.label) throw DataError("knn_eval: unlabeled window");
    prep::NormalizedWindow nw = prep::normalize(w, model.config.norm);
    auto query = window_columns(nw);
    auto neighbors = knn_nearest(model, query, max_k);
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      VoteOutcome outcome = vote(model, neighbors, ks[ki]);
      if (outcome.label == w.label->id) ++correct[ki];
      confusion[ki][static_cast<std::size_t>(w.label->id) * c +
                    static_cast<std::size_t>(outcome.label)]++;
    }
  }

  KnnEval eval;
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    const double acc = static_cast<double>(correct[ki]) / static_cast<double>(indices.size());
    eval.accuracy_by_k.emplace_back(ks[ki], acc);
    if (acc > eval.best_accuracy) {
      eval.best_accuracy = acc;
      eval.best_k = ks[ki];
      eval.confusion = confusion[ki];
    }
  }
  return eval;
}

void save_knn(const KnnModel& model, const std::string& path) {
  nn::Container c;
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : model.features)
    feats.push_back({{"syscall", f.syscall}, {"field", f.field}});
  c.manifest = {{"model_type", "dtwknn"},
                {"meta",
                 {{"model_type", "dtwknn"},
                  {"T", model.T},
                  {"n", model.features.size()},
                  {"c", model.n_classes},
                  {"features", feats},
                  {"classes", model.classes},
                  {"norm", prep::to_string(model.config.norm)},
                  {"sample_interval_us", model.sample_interval_us}}},
                {"k", model.config.k},
                {"band", model.config.band == kNoBand ? 0 : model.config.band},
                {"agg", model.config.agg == FeatureAgg::sum_per_feature ? "sum" : "pointwise"}};

  const std::size_t count = model.size(), F = model.features.size(), T = model.T;
  nn::Tensor train({count, F, T});
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t f = 0; f < F; ++f)
      std::copy(model.series[i][f].begin(), model.series[i][f].end(),
                train.data.begin() + static_cast<long>((i * F + f) * T));
  nn::Tensor labels({count});
  for (std::size_t i = 0; i < count; ++i) labels.data[i] = model.labels[i];
  c.tensors.emplace_back("train_series", std::move(train));
  c.tensors.emplace_back("labels", std::move(labels));
  nn::save_container(c, path);
}

KnnModel load_knn(const std::string& path) {
  nn::Container c = nn::load_container(path);
  if (c.manifest.value("model_type", "") != "dtwknn")
    throw DataError("not a dtwknn model: " + path);

  KnnModel model;
  const auto& meta = c.manifest.at("meta");
  model.T = meta.at("T").get<std::size_t>();
  model.n_classes = meta.at("c").get<std::size_t>();
  model.classes = meta.value("classes", std::vector<std::string>{});
  for (const auto& f : meta.at("features"))
    model.features.push_back(
        {f.at("syscall").get<std::string>(), f.at("field").get<std::string>()});
  model.config.norm = prep::norm_method_from_string(meta.value("norm", "minmax"));
  model.sample_interval_us = meta.value("sample_interval_us", std::int64_t{1000});
  model.config.k = c.manifest.value("k", std::size_t{1});
  const std::size_t band = c.manifest.value("band", std::size_t{0});
  model.config.band = band == 0 ? kNoBand : band;
  model.config.agg = c.manifest.value("agg", "sum") == "sum" ? FeatureAgg::sum_per_feature
                                                             : FeatureAgg::pointwise_l1;

  const nn::Tensor* train = nullptr;
  const nn::Tensor* labels = nullptr;
  for (const auto& [name, t] : c.tensors) {
    if (name == "train_series") train = &t;
    if (name == "labels") labels = &t;
  }
  if (!train || !labels) throw DataError("dtwknn model missing tensors: " + path);

  const std::size_t count = train->dim(0), F = train->dim(1), T = train->dim(2);
  model.series.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    model.series[i].assign(F, std::vector<double>(T));
    for (std::size_t f = 0; f < F; ++f)
      std::copy(train->data.begin() + static_cast<long>((i * F + f) * T),
                train->data.begin() + static_cast<long>((i * F + f + 1) * T),
                model.series[i][f].begin());
  }
  model.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) model.labels[i] = static_cast<int>(labels->data[i]);
  return model;
}

}  // namespace oscope::dtw
