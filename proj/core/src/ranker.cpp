#include "oscope/ranker.hpp"

#include <algorithm>
#include <cmath>

namespace oscope::ranker {

double euclid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("euclid: length mismatch");
  if (x.empty()) throw DataError("euclid: empty series");
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double avg_distance(const std::vector<std::vector<double>>& series_set) {
  const std::size_t N = series_set.size();
  if (N < 2) throw DataError("avg_distance: need at least 2 series");
  double sum = 0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j)
      sum += euclid(series_set[i], series_set[j]);
  return 2.0 / (static_cast<double>(N) * static_cast<double>(N - 1)) * sum;
}

namespace {

std::vector<double> minmax_series(const std::vector<double>& s) {
  auto [mn_it, mx_it] = std::minmax_element(s.begin(), s.end());
  const double mn = *mn_it, range = *mx_it - *mn_it;
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    out[i] = range > 0 ? (s[i] - mn) / range : 0.0;
  return out;
}

}  // namespace

RankingReport rank_features(
    const std::vector<std::pair<FeatureId, std::vector<std::vector<double>>>>& traces,
    const RankOptions& opts) {
  if (traces.empty()) throw DataError("rank_features: no features");
  const std::size_t N = traces.front().second.size();
  RankingReport report;
  for (const auto& [feature, series_set] : traces) {
    if (series_set.size() != N)
      throw DataError("rank_features: repetition count differs for " + feature.str());
    if (N < 2) throw DataError("rank_features: need at least 2 repeats per feature");
    double d;
    if (opts.normalize) {
      std::vector<std::vector<double>> norm;
      norm.reserve(N);
      for (const auto& s : series_set) norm.push_back(minmax_series(s));
      d = avg_distance(norm);
    } else {
      d = avg_distance(series_set);
    }
    report.entries.push_back({feature, d});
  }
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const RankingEntry& a, const RankingEntry& b) {
                     return a.avg_distance < b.avg_distance;
                   });
  return report;
}

RankingReport rank_windows(const std::vector<Window>& repeats, const RankOptions& opts) {
  if (repeats.empty()) throw DataError("rank_windows: no windows");
  const auto& features = repeats.front().features;
  std::vector<std::pair<FeatureId, std::vector<std::vector<double>>>> traces;
  for (std::size_t f = 0; f < features.size(); ++f) {
    std::vector<std::vector<double>> set;
    for (const auto& w : repeats) {
      if (w.features != features) throw DataError("rank_windows: feature lists differ");
      std::vector<double> s(w.T);
      for (std::size_t t = 0; t < w.T; ++t) s[t] = w.at(t, f);
      set.push_back(std::move(s));
    }
    traces.emplace_back(features[f], std::move(set));
  }
  return rank_features(traces, opts);
}

}  // namespace oscope::ranker
