#pragma once

#include <string>
#include <vector>

#include "oscope/types.hpp"

namespace oscope::prep {

enum class NormMethod { minmax, mean, zscore, meansub, none };

NormMethod norm_method_from_string(const std::string& s);
std::string to_string(NormMethod m);

struct FeatureStats {
  double min = 0, max = 0, mean = 0, std_dev = 0;
};

// A window after column-wise normalization, with the per-feature statistics
// that produced it. Statistics are always computed per window.
struct NormalizedWindow {
  std::vector<FeatureId> features;
  std::size_t T = 0;
  std::vector<double> values;  // row-major T x n
  NormMethod method = NormMethod::none;
  std::vector<FeatureStats> stats;
  std::optional<BehaviorLabel> label;

  double at(std::size_t t, std::size_t f) const { return values[t * features.size() + f]; }
};

// Column-wise x* = (x - min) / (max - min); a constant column maps to all
// zeros. Output lies in [0,1] and non-constant columns attain both extremes.
NormalizedWindow minmax_normalize(const Window& w);

// (x - mean) / (max - min); constant column -> zeros.
NormalizedWindow mean_normalize(const Window& w);

// (x - mean) / population std; zero std -> zeros.
NormalizedWindow zscore_standardize(const Window& w);

// x - mean.
NormalizedWindow mean_subtract(const Window& w);

NormalizedWindow normalize(const Window& w, NormMethod method);

// Column-stack single-feature windows sharing T into one multivariate window,
// feature order as given.
Window fuse_features(const std::vector<Window>& singles);

// Slice length samples starting at onset; a short tail is padded by repeating
// the final sample. onset at or past the trace end is an error.
Window extract_window(const RawTrace& trace, std::size_t onset,
                      std::size_t length = kWindowLength);

// Keep every stride-th sample, starting at row 0. Used by the invoking-interval
// ablation (a 1 ms trace at stride 5 stands in for 5 ms sampling).
Window downsample(const Window& w, std::size_t stride);

}  // namespace oscope::prep
