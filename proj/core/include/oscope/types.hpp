#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace oscope {

// Thrown on malformed inputs (bad files, bad datasets, violated preconditions
// of data-handling operations). The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown on environment failures (syscalls, I/O, network, divergent training).
// The CLI maps this to exit code 3.
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Identity of one sampled counter: which syscall and which field of its result.
struct FeatureId {
  std::string syscall;
  std::string field;

  bool operator==(const FeatureId&) const = default;
  std::string str() const { return syscall + "." + field; }
};

// The five counters the collector samples by default. Extra features may be
// registered by callers, but these five are always valid.
const std::vector<FeatureId>& feature_catalog();
bool is_catalog_feature(const FeatureId& f);

struct BehaviorLabel {
  int id = -1;
  std::string name;

  bool operator==(const BehaviorLabel&) const = default;
};

struct DeviceMeta {
  std::string model;
  std::string os_version;
  std::string hostname;
};

// A multivariate time series of raw counter samples, row-major T_raw x n.
struct RawTrace {
  std::vector<FeatureId> features;
  std::int64_t sample_interval_us = 1000;
  std::int64_t start_time_unix_us = 0;
  std::vector<std::uint64_t> samples;  // row-major, rows() x features.size()
  std::optional<BehaviorLabel> label;
  DeviceMeta device;

  std::size_t n_features() const { return features.size(); }
  std::size_t rows() const {
    return features.empty() ? 0 : samples.size() / features.size();
  }
  std::uint64_t at(std::size_t t, std::size_t f) const {
    return samples[t * features.size() + f];
  }
  void validate() const;
};

inline constexpr std::size_t kWindowLength = 5000;

// The classifier's unit of input: a fixed-length slice of a trace, as reals.
// T is kWindowLength unless explicitly overridden for ablation experiments.
struct Window {
  std::vector<FeatureId> features;
  std::size_t T = kWindowLength;
  std::vector<double> values;  // row-major, T x features.size()
  std::optional<BehaviorLabel> label;

  std::size_t n_features() const { return features.size(); }
  double at(std::size_t t, std::size_t f) const {
    return values[t * features.size() + f];
  }
  double& at(std::size_t t, std::size_t f) {
    return values[t * features.size() + f];
  }
};

// Labeled windows plus a deterministic stratified 7:3 split.
struct Dataset {
  std::vector<Window> windows;
  std::uint64_t split_seed = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;

  std::size_t n_classes() const;
  std::vector<std::string> class_names() const;
};

// Stratified per class: train count = floor(0.7 * class size), remainder to
// test (140/60 at 200 per class). Pure function of (windows order, seed).
Dataset make_dataset(std::vector<Window> windows, std::uint64_t seed);

struct RankingEntry {
  FeatureId feature;
  double avg_distance = 0.0;
};

// Entries sorted ascending by avg_distance; lower = more vulnerable.
struct RankingReport {
  std::vector<RankingEntry> entries;
};

struct ClassificationResult {
  BehaviorLabel label;
  std::vector<double> probabilities;  // length c, nonnegative, sums to 1
  std::int64_t latency_us = 0;
};

// Shared convention: the predicted label is the argmax of the probability
// vector, ties broken by lowest class id.
std::size_t argmax_lowest_id(const std::vector<double>& probabilities);

}  // namespace oscope
