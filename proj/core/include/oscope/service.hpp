#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "oscope/collector.hpp"
#include "oscope/dtwknn.hpp"
#include "oscope/nn/model.hpp"
#include "oscope/types.hpp"

namespace oscope::service {

// File-per-trace store: the uploaded bytes are kept verbatim (so retrieval
// is bit-exact) and written via a temp file plus atomic rename. The store is
// append-only; attaching a classification result is the only mutation.
class TraceStore {
 public:
  explicit TraceStore(std::string dir);

  // Persists the raw body, returns the new 128-bit hex id. The body must
  // already have been validated as a parsable trace.
  std::string put(const std::string& body);

  std::optional<std::string> get(const std::string& id) const;
  bool contains(const std::string& id) const;
  std::size_t count() const;
  std::vector<std::string> ids() const;
  const std::string& dir() const { return dir_; }

  void put_result(const std::string& trace_id, const std::string& model_id,
                  const std::string& result_json);
  std::optional<std::string> get_result(const std::string& trace_id,
                                        const std::string& model_id) const;

 private:
  std::string path_of(const std::string& id) const;
  std::string dir_;
  mutable std::mutex mu_;
  std::vector<std::string> ids_;
  std::uint64_t nonce_ = 0;
};

struct ServiceConfig {
  std::string listen_address = "127.0.0.1";
  int port = 8017;                    // 0 = pick any free port
  std::string store_dir = "traces";   // env OSCOPE_STORE overrides
  std::vector<std::string> model_paths;
  std::size_t max_body_bytes = 64ull << 20;
  collector::OnsetDetectorConfig onset;
};

ServiceConfig load_service_config(const std::string& path);

// A loaded classifier: either the neural model or the dtw-knn baseline.
struct LoadedModel {
  std::string id;
  std::string path;
  std::unique_ptr<nn::Model> net;
  std::unique_ptr<dtw::KnnModel> knn;

  const std::vector<FeatureId>& features() const;
  std::size_t window_length() const;
};

// HTTP front end:
//   POST /v1/traces            body = trace file format  -> 201 {"id"}
//   POST /v1/classify          {"trace_id","model_id"?,"force"?} -> result
//   GET  /v1/traces/{id}       stored bytes, bit-exact
//   GET  /v1/models            manifests of loaded models
//   GET  /v1/health            store path, model count, uptime
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  // Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();

  TraceStore& store() { return *store_; }
  const ServiceConfig& config() const { return config_; }

 private:
  struct Impl;
  ServiceConfig config_;
  std::unique_ptr<TraceStore> store_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace oscope::service
