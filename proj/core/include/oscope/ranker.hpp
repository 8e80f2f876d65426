#pragma once

#include <span>
#include <vector>

#include "oscope/types.hpp"

namespace oscope::ranker {

// Euclidean distance between two equal-length series:
// sqrt(sum_i (x_i - y_i)^2).
double euclid(std::span<const double> x, std::span<const double> y);

// Average pairwise Euclidean distance over N >= 2 repeated series of one
// counter: (2 / (N*(N-1))) * sum_{i<j} euclid(v[i], v[j]).
double avg_distance(const std::vector<std::vector<double>>& series_set);

struct RankOptions {
  bool normalize = true;  // min-max per series before measuring distance
};

// Input: for each feature, the same number N >= 2 of repeated same-behavior
// series. Output: ascending avg_distance (lower ranks as more vulnerable).
RankingReport rank_features(
    const std::vector<std::pair<FeatureId, std::vector<std::vector<double>>>>& traces,
    const RankOptions& opts = {});

// Convenience: split multivariate windows into per-feature series sets and rank.
RankingReport rank_windows(const std::vector<Window>& repeats,
                           const RankOptions& opts = {});

}  // namespace oscope::ranker
