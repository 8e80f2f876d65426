#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "oscope/signalprep.hpp"
#include "oscope/types.hpp"

namespace oscope::dtw {

inline constexpr std::size_t kNoBand = std::numeric_limits<std::size_t>::max();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Classic dynamic-programming alignment cost, per-step cost |x_i - y_j|,
// steps {match, insert, delete}. An optional Sakoe-Chiba band restricts
// |i - j| (widened to |len(x) - len(y)| when needed so a path exists).
// Accumulated cost above `cutoff` abandons early and returns +inf.
double dtw_distance(std::span<const double> x, std::span<const double> y,
                    std::size_t band = kNoBand, double cutoff = kInf);

// Lower envelope bound for band-constrained DTW against a fixed query:
// sum of |c_t - U_t| above / |L_t - c_t| below the query's band envelope.
void band_envelope(std::span<const double> q, std::size_t band, std::vector<double>& upper,
                   std::vector<double>& lower);
double lb_keogh(std::span<const double> upper, std::span<const double> lower,
                std::span<const double> candidate);

enum class FeatureAgg { sum_per_feature, pointwise_l1 };

struct KnnConfig {
  std::size_t k = 1;
  std::size_t band = kNoBand;
  FeatureAgg agg = FeatureAgg::sum_per_feature;
  prep::NormMethod norm = prep::NormMethod::minmax;
};

// Training windows kept (normalized) per feature for column access.
class KnnModel {
 public:
  KnnConfig config;
  std::vector<FeatureId> features;
  std::size_t T = 0;
  std::int64_t sample_interval_us = 1000;
  std::size_t n_classes = 0;
  std::vector<std::string> classes;
  std::vector<std::vector<std::vector<double>>> series;  // [window][feature][t]
  std::vector<int> labels;

  std::size_t size() const { return series.size(); }
};

// Stores the dataset's training split, normalized per config.norm.
KnnModel knn_build(const Dataset& ds, const KnnConfig& config);

struct Neighbor {
  double distance;
  std::size_t index;
};

// The max_k nearest training windows, ascending by aggregated DTW distance.
// LB_Keogh pruning plus early abandoning keep full DTW runs rare.
std::vector<Neighbor> knn_nearest(const KnnModel& model,
                                  const std::vector<std::vector<double>>& query,
                                  std::size_t max_k);

// Majority vote over the K nearest; ties broken by smaller mean distance,
// then lower label id. Probabilities are vote fractions.
ClassificationResult knn_classify(const KnnModel& model, const prep::NormalizedWindow& window);

struct KnnEval {
  std::vector<std::pair<std::size_t, double>> accuracy_by_k;
  std::size_t best_k = 1;
  double best_accuracy = 0.0;
  std::vector<std::size_t> confusion;  // for best_k, c x c
};

// One neighbor pass per query serves every K in `ks`.
KnnEval knn_eval(const KnnModel& model, const Dataset& ds, const std::vector<std::size_t>& ks,
                 bool test_split = true);

void save_knn(const KnnModel& model, const std::string& path);
KnnModel load_knn(const std::string& path);

}  // namespace oscope::dtw
