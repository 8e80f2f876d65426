#include "oscope/ranker.hpp"

#include <cmath>

#include "doctest.h"
#include "oscope/rng.hpp"

using namespace oscope;
using namespace oscope::ranker;

namespace {

// Independent elementwise oracle for the distance sum.
double euclid_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

// Brute force over all ordered pairs, halved.
double avg_distance_oracle(const std::vector<std::vector<double>>& set) {
  const double N = static_cast<double>(set.size());
  double s = 0;
  for (const auto& a : set)
    for (const auto& b : set) s += euclid_oracle(a, b);
  return s / (N * (N - 1));
}

std::vector<double> random_series(Rng& rng, std::size_t len) {
  std::vector<double> out(len);
  for (auto& v : out) v = rng.uniform(-10, 10);
  return out;
}

}  // namespace

TEST_CASE("euclid basics") {
  CHECK(euclid(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 0.0);
  CHECK(euclid(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == doctest::Approx(5.0));
  CHECK_THROWS_AS(euclid(std::vector<double>{1}, std::vector<double>{1, 2}), DataError);
}

TEST_CASE("euclid matches the elementwise oracle on random pairs") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto x = random_series(rng, 7);
    auto y = random_series(rng, 7);
    CHECK(std::fabs(euclid(x, y) - euclid_oracle(x, y)) < 1e-12);
  }
}

TEST_CASE("euclid satisfies the metric axioms on random triples") {
  Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t len = 1 + rng.uniform_int(20);
    auto x = random_series(rng, len);
    auto y = random_series(rng, len);
    auto z = random_series(rng, len);
    CHECK(euclid(x, x) == 0.0);
    CHECK(euclid(x, y) == doctest::Approx(euclid(y, x)).epsilon(1e-15));
    CHECK(euclid(x, z) <= euclid(x, y) + euclid(y, z) + 1e-9);
  }
}

TEST_CASE("avg_distance of two series is their distance") {
  std::vector<std::vector<double>> set = {{0, 0}, {3, 4}};
  CHECK(avg_distance(set) == doctest::Approx(5.0));
}

TEST_CASE("avg_distance of identical series is zero") {
  std::vector<std::vector<double>> set(4, std::vector<double>{1, 2, 3});
  CHECK(avg_distance(set) == 0.0);
}

TEST_CASE("avg_distance matches the brute-force pair oracle") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> set;
    for (int i = 0; i < 5; ++i) set.push_back(random_series(rng, 12));
    CHECK(std::fabs(avg_distance(set) - avg_distance_oracle(set)) < 1e-12);
  }
  CHECK_THROWS_AS(avg_distance({{1.0, 2.0}}), DataError);
}

TEST_CASE("avg_distance is permutation invariant") {
  Rng rng(14);
  std::vector<std::vector<double>> set;
  for (int i = 0; i < 6; ++i) set.push_back(random_series(rng, 9));
  const double base = avg_distance(set);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(set.begin(), set.end());
    CHECK(avg_distance(set) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("the published reference ordering sorts ascending") {
  // Distances measured elsewhere for these four counters; the report must
  // reproduce their order when given the same values.
  std::vector<std::pair<FeatureId, std::vector<std::vector<double>>>> traces;
  auto series_with_distance = [](double d) {
    // two series at euclid distance d
    return std::vector<std::vector<double>>{{0, 0}, {d, 0}};
  };
  traces.emplace_back(FeatureId{"sysinfo", "procs"}, series_with_distance(8.7784));
  traces.emplace_back(FeatureId{"statvfs", "f_ffree"}, series_with_distance(3.2806));
  traces.emplace_back(FeatureId{"sysinfo", "freeram"}, series_with_distance(6.9541));
  traces.emplace_back(FeatureId{"statvfs", "f_bavail"}, series_with_distance(4.3761));

  RankingReport report = rank_features(traces, {.normalize = false});
  REQUIRE(report.entries.size() == 4);
  CHECK(report.entries[0].feature.field == "f_ffree");
  CHECK(report.entries[1].feature.field == "f_bavail");
  CHECK(report.entries[2].feature.field == "freeram");
  CHECK(report.entries[3].feature.field == "procs");
  for (std::size_t i = 1; i < report.entries.size(); ++i)
    CHECK(report.entries[i - 1].avg_distance <= report.entries[i].avg_distance);
}

TEST_CASE("a feature with identical repeats ranks first") {
  std::vector<std::pair<FeatureId, std::vector<std::vector<double>>>> traces;
  traces.emplace_back(FeatureId{"sysinfo", "procs"},
                      std::vector<std::vector<double>>{{1, 2, 9}, {5, 0, 3}});
  traces.emplace_back(FeatureId{"statvfs", "f_ffree"},
                      std::vector<std::vector<double>>{{4, 4, 4}, {4, 4, 4}});
  RankingReport report = rank_features(traces);
  CHECK(report.entries[0].feature.field == "f_ffree");
  CHECK(report.entries[0].avg_distance == 0.0);
}

TEST_CASE("ranking is invariant under positive affine scaling of raw counters") {
  Rng rng(15);
  std::vector<std::vector<double>> base;
  for (int i = 0; i < 4; ++i) base.push_back(random_series(rng, 30));

  std::vector<std::vector<double>> scaled;
  for (const auto& s : base) {
    std::vector<double> t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = 1000.0 * s[i] + 5e6;
    scaled.push_back(std::move(t));
  }

  std::vector<std::pair<FeatureId, std::vector<std::vector<double>>>> traces;
  traces.emplace_back(FeatureId{"sysinfo", "procs"}, base);
  traces.emplace_back(FeatureId{"sysinfo", "freeram"}, scaled);
  RankingReport report = rank_features(traces);  // normalized
  CHECK(report.entries[0].avg_distance ==
        doctest::Approx(report.entries[1].avg_distance).epsilon(1e-12));
}
