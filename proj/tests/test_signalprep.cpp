#include "oscope/signalprep.hpp"

#include <cmath>

#include "doctest.h"
#include "oscope/rng.hpp"

using namespace oscope;
using namespace oscope::prep;

namespace {

Window window_from(const std::vector<std::vector<double>>& columns) {
  Window w;
  const std::size_t n = columns.size(), T = columns[0].size();
  for (std::size_t f = 0; f < n; ++f)
    w.features.push_back({"sysinfo", "col" + std::to_string(f)});
  w.T = T;
  w.values.resize(T * n);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t f = 0; f < n; ++f) w.values[t * n + f] = columns[f][t];
  return w;
}

std::vector<double> column(const NormalizedWindow& w, std::size_t f) {
  std::vector<double> out(w.T);
  for (std::size_t t = 0; t < w.T; ++t) out[t] = w.at(t, f);
  return out;
}

}  // namespace

TEST_CASE("minmax maps [1,3,5] to [0,0.5,1]") {
  auto nw = minmax_normalize(window_from({{1, 3, 5}}));
  CHECK(column(nw, 0) == std::vector<double>{0.0, 0.5, 1.0});
}

TEST_CASE("constant column maps to zeros") {
  auto nw = minmax_normalize(window_from({{7, 7, 7}}));
  CHECK(column(nw, 0) == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("minmax is idempotent") {
  Rng rng(5);
  std::vector<double> col(50);
  for (auto& v : col) v = rng.uniform(-100, 100);
  auto once = minmax_normalize(window_from({col}));
  auto twice = minmax_normalize(window_from({column(once, 0)}));
  for (std::size_t t = 0; t < once.T; ++t)
    CHECK(once.at(t, 0) == doctest::Approx(twice.at(t, 0)).epsilon(1e-12));
}

TEST_CASE("minmax is invariant under positive affine transforms") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> col(40), scaled(40);
    const double a = rng.uniform(0.01, 50.0), b = rng.uniform(-1000, 1000);
    for (std::size_t i = 0; i < col.size(); ++i) {
      col[i] = rng.uniform(-10, 10);
      scaled[i] = a * col[i] + b;
    }
    auto nw1 = minmax_normalize(window_from({col}));
    auto nw2 = minmax_normalize(window_from({scaled}));
    for (std::size_t t = 0; t < nw1.T; ++t)
      CHECK(std::fabs(nw1.at(t, 0) - nw2.at(t, 0)) < 1e-12);
  }
}

TEST_CASE("mean_subtract of [1,2,3] is [-1,0,1]") {
  auto nw = mean_subtract(window_from({{1, 2, 3}}));
  CHECK(column(nw, 0) == std::vector<double>{-1.0, 0.0, 1.0});
}

TEST_CASE("mean_normalize of [0,10] is [-0.5,0.5]") {
  auto nw = mean_normalize(window_from({{0, 10}}));
  CHECK(column(nw, 0) == std::vector<double>{-0.5, 0.5});
}

TEST_CASE("zscore output has mean 0 and population std 1") {
  Rng rng(7);
  std::vector<double> col(200);
  for (auto& v : col) v = rng.uniform(3, 900);
  auto nw = zscore_standardize(window_from({col}));
  double mean = 0;
  for (std::size_t t = 0; t < nw.T; ++t) mean += nw.at(t, 0);
  mean /= static_cast<double>(nw.T);
  double var = 0;
  for (std::size_t t = 0; t < nw.T; ++t) var += (nw.at(t, 0) - mean) * (nw.at(t, 0) - mean);
  var /= static_cast<double>(nw.T);
  CHECK(std::fabs(mean) < 1e-12);
  CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-12);
}

TEST_CASE("normalizers are column-local: permuting columns commutes") {
  Rng rng(8);
  std::vector<double> c0(30), c1(30), c2(30);
  for (std::size_t i = 0; i < 30; ++i) {
    c0[i] = rng.uniform(0, 10);
    c1[i] = rng.uniform(-5, 5);
    c2[i] = rng.uniform(100, 200);
  }
  for (auto method : {NormMethod::minmax, NormMethod::mean, NormMethod::zscore,
                      NormMethod::meansub}) {
    auto straight = normalize(window_from({c0, c1, c2}), method);
    auto permuted = normalize(window_from({c2, c0, c1}), method);
    for (std::size_t t = 0; t < 30; ++t) {
      CHECK(straight.at(t, 0) == doctest::Approx(permuted.at(t, 1)).epsilon(1e-15));
      CHECK(straight.at(t, 1) == doctest::Approx(permuted.at(t, 2)).epsilon(1e-15));
      CHECK(straight.at(t, 2) == doctest::Approx(permuted.at(t, 0)).epsilon(1e-15));
    }
  }
}

TEST_CASE("fuse then normalize equals normalize then fuse") {
  Rng rng(9);
  std::vector<double> c0(25), c1(25);
  for (std::size_t i = 0; i < 25; ++i) {
    c0[i] = rng.uniform(0, 1000);
    c1[i] = rng.uniform(0, 3);
  }
  Window a = window_from({c0});
  Window b = window_from({c1});
  b.features[0].field = "other";

  Window fused = fuse_features({a, b});
  auto norm_after = minmax_normalize(fused);

  auto na = minmax_normalize(a);
  auto nb = minmax_normalize(b);
  for (std::size_t t = 0; t < 25; ++t) {
    CHECK(norm_after.at(t, 0) == doctest::Approx(na.at(t, 0)).epsilon(1e-15));
    CHECK(norm_after.at(t, 1) == doctest::Approx(nb.at(t, 0)).epsilon(1e-15));
  }
}

TEST_CASE("fuse_features stacks columns in order") {
  Window a = window_from({{1, 2, 3}});
  Window b = window_from({{4, 5, 6}});
  b.features[0].field = "other";
  Window fused = fuse_features({a, b});
  CHECK(fused.n_features() == 2);
  CHECK(fused.at(1, 0) == 2);
  CHECK(fused.at(1, 1) == 5);

  CHECK(fuse_features({a}).values == a.values);

  Window shorter = window_from({{1, 2}});
  CHECK_THROWS_AS(fuse_features({a, shorter}), DataError);
}

TEST_CASE("extract_window slices and tail-pads") {
  RawTrace t;
  t.features = {{"sysinfo", "procs"}};
  t.sample_interval_us = 1000;
  for (std::uint64_t i = 0; i < 100; ++i) t.samples.push_back(i);

  Window head = prep::extract_window(t, 0, 50);
  CHECK(head.T == 50);
  CHECK(head.at(0, 0) == 0.0);
  CHECK(head.at(49, 0) == 49.0);

  Window padded = prep::extract_window(t, 80, 50);
  CHECK(padded.at(0, 0) == 80.0);
  CHECK(padded.at(19, 0) == 99.0);
  CHECK(padded.at(20, 0) == 99.0);  // repeated final sample
  CHECK(padded.at(49, 0) == 99.0);

  CHECK_THROWS_AS(prep::extract_window(t, 100, 10), DataError);
}

TEST_CASE("downsample keeps every stride-th sample") {
  Window w = window_from({{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}});
  Window d = downsample(w, 5);
  CHECK(d.T == 2);
  CHECK(d.at(0, 0) == 0.0);
  CHECK(d.at(1, 0) == 5.0);
}
