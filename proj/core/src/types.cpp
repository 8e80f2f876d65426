#include "oscope/types.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

namespace oscope {

const std::vector<FeatureId>& feature_catalog() {
  static const std::vector<FeatureId> catalog = {
      {"sysinfo", "procs"},
      {"statvfs", "f_bavail"},
      {"sysconf", "_SC_AVPHYS_PAGES"},
      {"statvfs", "f_ffree"},
      {"sysinfo", "freeram"},
  };
  return catalog;
}

bool is_catalog_feature(const FeatureId& f) {
  const auto& cat = feature_catalog();
  return std::find(cat.begin(), cat.end(), f) != cat.end();
}

void RawTrace::validate() const {
  if (features.empty()) throw DataError("trace has no features");
  if (sample_interval_us <= 0) throw DataError("sample_interval_us must be > 0");
  if (samples.empty()) throw DataError("trace has no samples");
  if (samples.size() % features.size() != 0)
    throw DataError("sample count not a multiple of feature count");
}

std::size_t Dataset::n_classes() const {
  int max_id = -1;
  for (const auto& w : windows)
    if (w.label) max_id = std::max(max_id, w.label->id);
  return static_cast<std::size_t>(max_id + 1);
}

std::vector<std::string> Dataset::class_names() const {
  std::vector<std::string> names(n_classes());
  for (const auto& w : windows)
    if (w.label) names[static_cast<std::size_t>(w.label->id)] = w.label->name;
  return names;
}

Dataset make_dataset(std::vector<Window> windows, std::uint64_t seed) {
  if (windows.empty()) throw DataError("make_dataset: no windows");

  const auto& ref_features = windows.front().features;
  const std::size_t ref_T = windows.front().T;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Window& w = windows[i];
    if (!w.label) throw DataError("make_dataset: window " + std::to_string(i) + " is unlabeled");
    if (w.features != ref_features)
      throw DataError("make_dataset: inconsistent feature lists");
    if (w.T != ref_T) throw DataError("make_dataset: inconsistent window lengths");
    by_class[w.label->id].push_back(i);
  }

  // Labels must already be dense 0..c-1.
  int expect = 0;
  for (const auto& [id, idxs] : by_class) {
    if (id != expect++)
      throw DataError("make_dataset: label ids not dense 0..c-1 (missing id " +
                      std::to_string(expect - 1) + ")");
    (void)idxs;
  }

  Dataset ds;
  ds.split_seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& [id, idxs] : by_class) {
    (void)id;
    std::shuffle(idxs.begin(), idxs.end(), rng);
    std::size_t n_train = static_cast<std::size_t>(0.7 * static_cast<double>(idxs.size()));
    for (std::size_t k = 0; k < idxs.size(); ++k)
      (k < n_train ? ds.train_indices : ds.test_indices).push_back(idxs[k]);
  }
  ds.windows = std::move(windows);
  return ds;
}

std::size_t argmax_lowest_id(const std::vector<double>& probabilities) {
  if (probabilities.empty()) throw DataError("argmax of empty probability vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probabilities.size(); ++i)
    if (probabilities[i] > probabilities[best]) best = i;
  return best;
}

}  // namespace oscope
