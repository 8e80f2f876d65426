#include "oscope/collector.hpp"

#include <atomic>
#include <chrono>
#include <thread>

#include "doctest.h"
#include "oscope/rng.hpp"
#include "oscope/simulator.hpp"

using namespace oscope;
using namespace oscope::collector;

namespace {

RawTrace trace_from(const std::vector<std::uint64_t>& samples) {
  RawTrace t;
  t.features = {feature_catalog()[0]};
  t.sample_interval_us = 1000;
  t.samples = samples;
  return t;
}

}  // namespace

TEST_CASE("constant trace has no onset") {
  std::vector<std::uint64_t> flat(3000, 500);
  OnsetDetectorConfig cfg;
  CHECK_FALSE(detect_onset(trace_from(flat), cfg).has_value());
}

TEST_CASE("all-zero baseline then any change triggers within persistence") {
  std::vector<std::uint64_t> s(4000, 100);
  for (std::size_t i = 2500; i < s.size(); ++i) s[i] = 130;
  OnsetDetectorConfig cfg;
  auto onset = detect_onset(trace_from(s), cfg);
  REQUIRE(onset.has_value());
  CHECK(*onset >= 2500);
  CHECK(*onset <= 2500 + cfg.persistence);
}

TEST_CASE("synthetic step at 3000 with 100x-noise amplitude is found within +-50") {
  sim::BehaviorSignature sig;
  sig.label = {0, "step"};
  sim::FeatureTrack track;
  track.feature = feature_catalog()[0];
  track.baseline = 5000;
  track.segments.push_back({sim::SegmentKind::step, 100, 300.0});  // 100x the noise sigma
  sig.tracks.push_back(track);

  sim::NoiseModel noise;
  noise.sigma = 3.0;
  noise.ar1_rho = 0.9;

  sim::SynthOptions opts;
  opts.trace_len = 4000;
  opts.template_start = 3000;

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    sim::SynthTrace st = sim::synth_trace_detail(sig, noise, seed, opts);
    REQUIRE(st.onset == 3000);
    auto onset = detect_onset(st.trace);
    REQUIRE(onset.has_value());
    CHECK(*onset >= 2950);
    CHECK(*onset <= 3050);
  }
}

TEST_CASE("onset detection is translation covariant") {
  Rng rng(31);
  std::vector<std::uint64_t> s(3000);
  for (auto& v : s) v = 1000 + rng.uniform_int(3);
  for (std::size_t i = 2400; i < s.size(); ++i) s[i] += 400;

  auto base = detect_onset(trace_from(s));
  std::vector<std::uint64_t> shifted = s;
  for (auto& v : shifted) v += 123456;
  auto moved = detect_onset(trace_from(shifted));
  REQUIRE(base.has_value());
  REQUIRE(moved.has_value());
  CHECK(*base == *moved);
}

TEST_CASE("detector preconditions") {
  std::vector<std::uint64_t> tiny(100, 5);
  CHECK_THROWS_AS(detect_onset(trace_from(tiny)), DataError);
  std::vector<std::uint64_t> ok(3000, 5);
  OnsetDetectorConfig bad;
  bad.trigger_factor = 1.0;
  CHECK_THROWS_AS(detect_onset(trace_from(ok), bad), DataError);
}

TEST_CASE("sample_once reads the requested features in order") {
  auto values = sample_once(feature_catalog(), "/data");
  REQUIRE(values.size() == 5);
  CHECK(values[0] >= 1);  // at least this process exists

  auto single = sample_once({feature_catalog()[0]}, "/data");
  REQUIRE(single.size() == 1);
  CHECK(single[0] >= 1);

  CHECK_THROWS_AS(sample_once({{"sysinfo", "no_such_field"}}, "/"), DataError);
  CHECK_THROWS_AS(sample_once({}, "/"), DataError);
}

TEST_CASE("record rejects bad configs") {
  SamplerConfig cfg;
  cfg.duration_s = 0;
  CHECK_THROWS_AS(record(cfg), DataError);
  cfg.duration_s = 1;
  cfg.interval_us = 10;
  CHECK_THROWS_AS(record(cfg), DataError);
}

TEST_CASE("sender drops the oldest trace when the queue is full") {
  std::atomic<int> sent{0};
  std::atomic<bool> release{false};
  std::vector<int> sent_labels;
  std::mutex mu;

  TraceSender sender(2, [&](const RawTrace& t) {
    while (!release) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    std::lock_guard lock(mu);
    sent_labels.push_back(t.label ? t.label->id : -1);
    ++sent;
  });

  auto make = [&](int id) {
    RawTrace t = trace_from({1, 2, 3});
    t.label = BehaviorLabel{id, "t"};
    return t;
  };

  // First is grabbed by the worker (blocked in send); the queue holds 2.
  sender.enqueue(make(0));
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  sender.enqueue(make(1));
  sender.enqueue(make(2));
  sender.enqueue(make(3));  // drops 1, the oldest unsent
  release = true;
  sender.drain_and_stop();

  CHECK(sender.dropped() == 1);
  CHECK(sender.sent() == 3);
  CHECK(sent_labels == std::vector<int>{0, 2, 3});
}

TEST_CASE("sender counts failures without blocking the producer") {
  TraceSender sender(4, [&](const RawTrace&) { throw RuntimeFailure("down"); });
  sender.enqueue(trace_from({1}));
  sender.enqueue(trace_from({2}));
  sender.drain_and_stop();
  CHECK(sender.send_failures() == 2);
  CHECK(sender.sent() == 0);
}

TEST_CASE("upload fails after retries against an unreachable endpoint") {
  UploadOptions opts;
  opts.attempts = 2;
  opts.backoff_ms = 1;
  CHECK_THROWS_AS(upload(trace_from({1, 2}), "http://127.0.0.1:1", opts), RuntimeFailure);
}
