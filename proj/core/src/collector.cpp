#include "oscope/collector.hpp"

#include <sys/statvfs.h>
#include <sys/sysinfo.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "oscope/trace_io.hpp"

namespace oscope::collector {

namespace {

struct BurstState {
  bool have_sysinfo = false;
  struct sysinfo si {};
  bool have_statvfs = false;
  struct statvfs vfs {};
  std::string statvfs_path;
};

std::uint64_t read_feature(const FeatureId& f, BurstState& burst) {
  if (f.syscall == "sysinfo") {
    if (!burst.have_sysinfo) {
      if (::sysinfo(&burst.si) != 0)
        throw RuntimeFailure("sysinfo failed for " + f.str() + ": " + std::strerror(errno));
      burst.have_sysinfo = true;
    }
    if (f.field == "procs") return burst.si.procs;
    if (f.field == "freeram") return burst.si.freeram;
    if (f.field == "totalram") return burst.si.totalram;
    if (f.field == "bufferram") return burst.si.bufferram;
    throw DataError("unknown sysinfo field: " + f.field);
  }
  if (f.syscall == "statvfs") {
    if (!burst.have_statvfs) {
      if (::statvfs(burst.statvfs_path.c_str(), &burst.vfs) != 0) {
        if (burst.statvfs_path != "/" && ::statvfs("/", &burst.vfs) == 0) {
          burst.statvfs_path = "/";
        } else {
          throw RuntimeFailure("statvfs failed for " + f.str() + ": " + std::strerror(errno));
        }
      }
      burst.have_statvfs = true;
    }
    if (f.field == "f_bavail") return burst.vfs.f_bavail;
    if (f.field == "f_ffree") return burst.vfs.f_ffree;
    if (f.field == "f_bfree") return burst.vfs.f_bfree;
    throw DataError("unknown statvfs field: " + f.field);
  }
  if (f.syscall == "sysconf") {
    long name;
    if (f.field == "_SC_AVPHYS_PAGES") name = _SC_AVPHYS_PAGES;
    else if (f.field == "_SC_PHYS_PAGES") name = _SC_PHYS_PAGES;
    else throw DataError("unknown sysconf field: " + f.field);
    errno = 0;
    long v = ::sysconf(static_cast<int>(name));
    if (v < 0)
      throw RuntimeFailure("sysconf failed for " + f.str() + ": " + std::strerror(errno));
    return static_cast<std::uint64_t>(v);
  }
  throw DataError("unknown syscall source: " + f.syscall);
}

}  // namespace

std::vector<std::uint64_t> sample_once(const std::vector<FeatureId>& features,
                                       const std::string& statvfs_path) {
  if (features.empty()) throw DataError("sample_once: no features");
  BurstState burst;
  burst.statvfs_path = statvfs_path;
  std::vector<std::uint64_t> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(read_feature(f, burst));
  return out;
}

RecordResult record(const SamplerConfig& config) {
  if (config.features.empty()) throw DataError("record: no features");
  if (config.interval_us < 100) throw DataError("record: interval must be >= 100 us");
  if (config.duration_s < 1.0) throw DataError("record: duration must be >= 1 s");

  const std::size_t n = config.features.size();
  const std::size_t rows = static_cast<std::size_t>(
      std::llround(config.duration_s * 1e6 / static_cast<double>(config.interval_us)));

  RecordResult result;
  RawTrace& trace = result.trace;
  trace.features = config.features;
  trace.sample_interval_us = config.interval_us;
  trace.samples.reserve(rows * n);

  char host[256] = {0};
  ::gethostname(host, sizeof(host) - 1);
  trace.device = {"linux-host", "", host};
  {
    std::ifstream rel("/proc/sys/kernel/osrelease");
    if (rel) std::getline(rel, trace.device.os_version);
  }

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  trace.start_time_unix_us = std::chrono::duration_cast<std::chrono::microseconds>(
                                 std::chrono::system_clock::now().time_since_epoch())
                                 .count();

  const auto interval = std::chrono::microseconds(config.interval_us);
  const std::size_t max_failures = std::max<std::size_t>(1, rows / 100);
  clock::time_point first_burst{}, last_burst{};

  for (std::size_t i = 0; i < rows; ++i) {
    std::this_thread::sleep_until(start + interval * i);
    const auto burst_time = clock::now();
    if (i == 0) first_burst = burst_time;
    last_burst = burst_time;
    try {
      auto values = sample_once(config.features, config.statvfs_path);
      trace.samples.insert(trace.samples.end(), values.begin(), values.end());
    } catch (const RuntimeFailure&) {
      ++result.stats.failed_bursts;
      if (result.stats.failed_bursts > max_failures)
        throw RuntimeFailure("record: sustained sampling failure (" +
                             std::to_string(result.stats.failed_bursts) + " of " +
                             std::to_string(rows) + " bursts)");
      if (i == 0) throw;  // no previous row to repeat
      trace.samples.insert(trace.samples.end(), trace.samples.end() - static_cast<long>(n),
                           trace.samples.end());
    }
  }

  result.stats.rows = rows;
  if (rows > 1)
    result.stats.mean_interval_us =
        std::chrono::duration_cast<std::chrono::nanoseconds>(last_burst - first_burst).count() /
        1e3 / static_cast<double>(rows - 1);
  return result;
}

std::optional<std::size_t> detect_onset(const RawTrace& trace, const OnsetDetectorConfig& config) {
  trace.validate();
  if (config.trigger_factor <= 1.0) throw DataError("detect_onset: trigger_factor must be > 1");
  if (config.persistence < 1) throw DataError("detect_onset: persistence must be >= 1");

  const std::size_t T = trace.rows();
  const std::size_t n = trace.n_features();
  const std::size_t bw = config.baseline_window;
  const std::size_t m = config.persistence;
  if (T < bw + m) throw DataError("detect_onset: trace shorter than baseline_window + persistence");

  constexpr double kEps = 1e-9;

  // Per-feature absolute first differences (u64-safe).
  std::vector<std::vector<double>> diffs(n, std::vector<double>(T, 0.0));
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t t = 1; t < T; ++t) {
      const std::uint64_t a = trace.at(t, f), b = trace.at(t - 1, f);
      diffs[f][t] = a >= b ? static_cast<double>(a - b) : -static_cast<double>(b - a);
      diffs[f][t] = std::fabs(diffs[f][t]);
    }

  std::vector<double> threshold(n);
  for (std::size_t f = 0; f < n; ++f) {
    double sum = 0;
    for (std::size_t t = 1; t < bw; ++t) sum += diffs[f][t];
    const double baseline = sum / static_cast<double>(bw - 1);
    threshold[f] = config.trigger_factor * (baseline + kEps);
  }

  // Rolling mean of the last m diffs, scanned from the end of the baseline.
  std::vector<double> rolling(n, 0.0);
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t t = bw - m; t < bw; ++t) rolling[f] += diffs[f][t];
  for (std::size_t t = bw; t < T; ++t) {
    for (std::size_t f = 0; f < n; ++f) {
      rolling[f] += diffs[f][t] - diffs[f][t - m];
      if (rolling[f] / static_cast<double>(m) > threshold[f]) return t;
    }
  }
  return std::nullopt;
}

namespace {

std::pair<std::string, std::string> split_url(const std::string& endpoint) {
  // scheme://host[:port] [path-prefix]
  auto scheme_end = endpoint.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = endpoint.find('/', host_start);
  if (path_start == std::string::npos) return {endpoint, ""};
  std::string prefix = endpoint.substr(path_start);
  if (prefix == "/") prefix.clear();
  return {endpoint.substr(0, path_start), prefix};
}

}  // namespace

std::string upload(const RawTrace& trace, const std::string& endpoint, const UploadOptions& opts) {
  const std::string body = trace_io::write_trace(trace);
  auto [base, prefix] = split_url(endpoint);
  std::string last_error;
  int backoff = opts.backoff_ms;
  for (int attempt = 0; attempt < opts.attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    httplib::Client client(base);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(30, 0);
    auto res = client.Post(prefix + "/v1/traces", body, "application/x-oscope-trace");
    if (!res) {
      last_error = "connection error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      try {
        return nlohmann::json::parse(res->body).at("id").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw RuntimeFailure(std::string("upload: malformed server response: ") + e.what());
      }
    }
    last_error = "status " + std::to_string(res->status) + ": " + res->body;
    if (res->status >= 400 && res->status < 500) break;  // not transient
  }
  throw RuntimeFailure("upload failed after retries: " + last_error);
}

struct TraceSender::Impl {
  std::size_t capacity;
  SendFn send;
  std::deque<RawTrace> queue;
  std::mutex mu;
  std::condition_variable cv;
  bool stopping = false;
  std::size_t dropped = 0, sent = 0, failures = 0;
  std::thread worker;

  void run() {
    for (;;) {
      RawTrace next;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (queue.empty()) return;  // stopping and drained
        next = std::move(queue.front());
        queue.pop_front();
      }
      try {
        send(next);
        std::lock_guard lock(mu);
        ++sent;
      } catch (...) {
        std::lock_guard lock(mu);
        ++failures;
      }
    }
  }
};

TraceSender::TraceSender(std::size_t capacity, SendFn send) : impl_(new Impl) {
  impl_->capacity = std::max<std::size_t>(1, capacity);
  impl_->send = std::move(send);
  impl_->worker = std::thread([this] { impl_->run(); });
}

TraceSender::~TraceSender() {
  drain_and_stop();
}

void TraceSender::enqueue(RawTrace trace) {
  {
    std::lock_guard lock(impl_->mu);
    if (impl_->stopping) return;
    if (impl_->queue.size() >= impl_->capacity) {
      impl_->queue.pop_front();
      ++impl_->dropped;
    }
    impl_->queue.push_back(std::move(trace));
  }
  impl_->cv.notify_one();
}

void TraceSender::drain_and_stop() {
  {
    std::lock_guard lock(impl_->mu);
    if (impl_->stopping && !impl_->worker.joinable()) return;
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  if (impl_->worker.joinable()) impl_->worker.join();
}

std::size_t TraceSender::dropped() const {
  std::lock_guard lock(impl_->mu);
  return impl_->dropped;
}
std::size_t TraceSender::sent() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sent;
}
std::size_t TraceSender::send_failures() const {
  std::lock_guard lock(impl_->mu);
  return impl_->failures;
}

}  // namespace oscope::collector
