#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oscope/types.hpp"

namespace oscope::collector {

struct SamplerConfig {
  std::vector<FeatureId> features = feature_catalog();
  std::int64_t interval_us = 1000;   // >= 100
  double duration_s = 5.0;           // >= 1
  std::string statvfs_path = "/data";  // falls back to "/" if unreadable
};

struct OnsetDetectorConfig {
  std::size_t baseline_window = 2000;
  double trigger_factor = 5.0;  // k > 1
  std::size_t persistence = 10;  // rolling-difference window m >= 1
};

// One burst: every feature read in declared order, each underlying syscall
// issued at most once per burst. Throws RuntimeFailure with the OS error on
// any failure; partial results are never returned.
std::vector<std::uint64_t> sample_once(const std::vector<FeatureId>& features,
                                       const std::string& statvfs_path = "/data");

struct RecordStats {
  double mean_interval_us = 0.0;
  std::size_t failed_bursts = 0;  // isolated failures repeat the previous row
  std::size_t rows = 0;
};

struct RecordResult {
  RawTrace trace;
  RecordStats stats;
};

// Samples on absolute deadlines (start + i * interval) so timing error does
// not accumulate. Aborts if more than 1% of bursts fail.
RecordResult record(const SamplerConfig& config);

// Two-step change-point rule: the idle baseline is the mean absolute first
// difference over the first baseline_window samples (per feature); the onset
// is the first index whose rolling mean absolute difference over the last
// `persistence` samples exceeds trigger_factor * (baseline + 1e-9) on any
// feature. Returns nullopt if never exceeded.
std::optional<std::size_t> detect_onset(const RawTrace& trace,
                                        const OnsetDetectorConfig& config = {});

struct UploadOptions {
  int attempts = 3;
  int backoff_ms = 100;  // doubled per retry
};

// POST the trace to <endpoint>/v1/traces; returns the server-assigned id.
// Retries transient failures with exponential backoff, then throws
// RuntimeFailure carrying the last status and body.
std::string upload(const RawTrace& trace, const std::string& endpoint,
                   const UploadOptions& opts = {});

// Decouples acquisition from transmission with a bounded queue. When the
// queue is full the oldest unsent trace is dropped and counted. The send
// function is injectable so the queue logic is testable without a server.
class TraceSender {
 public:
  using SendFn = std::function<void(const RawTrace&)>;

  TraceSender(std::size_t capacity, SendFn send);
  ~TraceSender();

  TraceSender(const TraceSender&) = delete;
  TraceSender& operator=(const TraceSender&) = delete;

  void enqueue(RawTrace trace);  // never blocks
  void drain_and_stop();         // flush queued traces, then stop the worker

  std::size_t dropped() const;
  std::size_t sent() const;
  std::size_t send_failures() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace oscope::collector
