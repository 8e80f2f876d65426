#include "oscope/signalprep.hpp"

#include <algorithm>
#include <cmath>

namespace oscope::prep {

NormMethod norm_method_from_string(const std::string& s) {
  if (s == "minmax") return NormMethod::minmax;
  if (s == "mean") return NormMethod::mean;
  if (s == "zscore") return NormMethod::zscore;
  if (s == "meansub") return NormMethod::meansub;
  if (s == "none") return NormMethod::none;
  throw DataError("unknown normalization method: " + s);
}

std::string to_string(NormMethod m) {
  switch (m) {
    case NormMethod::minmax: return "minmax";
    case NormMethod::mean: return "mean";
    case NormMethod::zscore: return "zscore";
    case NormMethod::meansub: return "meansub";
    case NormMethod::none: return "none";
  }
  return "?";
}

namespace {

NormalizedWindow normalize_impl(const Window& w, NormMethod method) {
  const std::size_t n = w.n_features();
  if (n == 0 || w.T == 0) throw DataError("normalize: empty window");
  if (method != NormMethod::none && w.T < 2)
    throw DataError("normalize: need at least 2 samples per column");

  NormalizedWindow out;
  out.features = w.features;
  out.T = w.T;
  out.method = method;
  out.label = w.label;
  out.values.resize(w.values.size());
  out.stats.resize(n);

  for (std::size_t f = 0; f < n; ++f) {
    double mn = w.at(0, f), mx = mn, sum = 0;
    for (std::size_t t = 0; t < w.T; ++t) {
      double v = w.at(t, f);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      sum += v;
    }
    const double mean = sum / static_cast<double>(w.T);
    double var = 0;
    for (std::size_t t = 0; t < w.T; ++t) {
      double d = w.at(t, f) - mean;
      var += d * d;
    }
    var /= static_cast<double>(w.T);  // population variance
    const double sd = std::sqrt(var);
    out.stats[f] = {mn, mx, mean, sd};

    const double range = mx - mn;
    for (std::size_t t = 0; t < w.T; ++t) {
      const double x = w.at(t, f);
      double y = 0;
      switch (method) {
        case NormMethod::minmax: y = range > 0 ? (x - mn) / range : 0.0; break;
        case NormMethod::mean: y = range > 0 ? (x - mean) / range : 0.0; break;
        case NormMethod::zscore: y = sd > 0 ? (x - mean) / sd : 0.0; break;
        case NormMethod::meansub: y = x - mean; break;
        case NormMethod::none: y = x; break;
      }
      out.values[t * n + f] = y;
    }
  }
  return out;
}

}  // namespace

NormalizedWindow minmax_normalize(const Window& w) { return normalize_impl(w, NormMethod::minmax); }
NormalizedWindow mean_normalize(const Window& w) { return normalize_impl(w, NormMethod::mean); }
NormalizedWindow zscore_standardize(const Window& w) { return normalize_impl(w, NormMethod::zscore); }
NormalizedWindow mean_subtract(const Window& w) { return normalize_impl(w, NormMethod::meansub); }

NormalizedWindow normalize(const Window& w, NormMethod method) {
  return normalize_impl(w, method);
}

Window fuse_features(const std::vector<Window>& singles) {
  if (singles.empty()) throw DataError("fuse_features: no inputs");
  if (singles.size() == 1) return singles.front();

  const std::size_t T = singles.front().T;
  std::size_t n = 0;
  for (const auto& s : singles) {
    if (s.T != T) throw DataError("fuse_features: window length mismatch");
    n += s.n_features();
  }

  Window out;
  out.T = T;
  out.label = singles.front().label;
  out.features.reserve(n);
  for (const auto& s : singles)
    out.features.insert(out.features.end(), s.features.begin(), s.features.end());
  out.values.resize(T * n);
  std::size_t col = 0;
  for (const auto& s : singles) {
    const std::size_t sn = s.n_features();
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = 0; f < sn; ++f) out.values[t * n + col + f] = s.at(t, f);
    col += sn;
  }
  return out;
}

Window extract_window(const RawTrace& trace, std::size_t onset, std::size_t length) {
  trace.validate();
  const std::size_t T_raw = trace.rows();
  if (onset >= T_raw) throw DataError("extract_window: onset beyond trace end");

  const std::size_t n = trace.n_features();
  Window w;
  w.features = trace.features;
  w.T = length;
  w.label = trace.label;
  w.values.resize(length * n);
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t src = std::min(onset + t, T_raw - 1);  // tail pad: repeat last row
    for (std::size_t f = 0; f < n; ++f)
      w.values[t * n + f] = static_cast<double>(trace.at(src, f));
  }
  return w;
}

Window downsample(const Window& w, std::size_t stride) {
  if (stride == 0) throw DataError("downsample: stride must be >= 1");
  if (stride == 1) return w;
  const std::size_t n = w.n_features();
  Window out;
  out.features = w.features;
  out.label = w.label;
  out.T = (w.T + stride - 1) / stride;
  out.values.reserve(out.T * n);
  for (std::size_t t = 0; t < w.T; t += stride)
    for (std::size_t f = 0; f < n; ++f) out.values.push_back(w.at(t, f));
  return out;
}

}  // namespace oscope::prep
