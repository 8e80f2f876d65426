#include "oscope/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "oscope/signalprep.hpp"
#include "oscope/nn/train.hpp"
#include "oscope/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace oscope::service {

// ------------------------------------------------------------- TraceStore

TraceStore::TraceStore(std::string dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() == ".trace") ids_.push_back(entry.path().stem().string());
  }
  std::sort(ids_.begin(), ids_.end());
}

std::string TraceStore::path_of(const std::string& id) const {
  return (fs::path(dir_) / (id + ".trace")).string();
}

std::string TraceStore::put(const std::string& body) {
  std::string id;
  {
    std::lock_guard lock(mu_);
    std::random_device rd;
    char buf[33];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx",
                  static_cast<unsigned long long>(
                      (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^ ++nonce_),
                  static_cast<unsigned long long>((static_cast<std::uint64_t>(rd()) << 32) ^ rd()));
    id.assign(buf, 32);
  }

  const std::string tmp = path_of(id) + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw RuntimeFailure("store: cannot write " + tmp);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.flush();
    if (!out) throw RuntimeFailure("store: short write " + tmp);
  }
  {
    int fd = ::open(tmp.c_str(), O_RDONLY);
    if (fd >= 0) {
      ::fsync(fd);
      ::close(fd);
    }
  }
  std::error_code ec;
  fs::rename(tmp, path_of(id), ec);
  if (ec) throw RuntimeFailure("store: rename failed: " + ec.message());

  std::lock_guard lock(mu_);
  ids_.push_back(id);
  return id;
}

std::optional<std::string> TraceStore::get(const std::string& id) const {
  std::ifstream in(path_of(id), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool TraceStore::contains(const std::string& id) const {
  return fs::exists(path_of(id));
}

std::size_t TraceStore::count() const {
  std::lock_guard lock(mu_);
  return ids_.size();
}

std::vector<std::string> TraceStore::ids() const {
  std::lock_guard lock(mu_);
  return ids_;
}

void TraceStore::put_result(const std::string& trace_id, const std::string& model_id,
                            const std::string& result_json) {
  const std::string path =
      (fs::path(dir_) / (trace_id + "__" + model_id + ".result.json")).string();
  std::ofstream out(path, std::ios::binary);
  out << result_json;
}

std::optional<std::string> TraceStore::get_result(const std::string& trace_id,
                                                  const std::string& model_id) const {
  const std::string path =
      (fs::path(dir_) / (trace_id + "__" + model_id + ".result.json")).string();
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ----------------------------------------------------------- LoadedModel

const std::vector<FeatureId>& LoadedModel::features() const {
  return net ? net->meta.features : knn->features;
}

std::size_t LoadedModel::window_length() const {
  return net ? net->meta.T : knn->T;
}

namespace {

LoadedModel load_any_model(const std::string& path) {
  LoadedModel m;
  m.path = path;
  m.id = fs::path(path).stem().string();
  json manifest = nn::load_manifest(path);
  if (manifest.value("model_type", "") == "dtwknn") {
    m.knn = std::make_unique<dtw::KnnModel>(dtw::load_knn(path));
  } else {
    m.net = std::make_unique<nn::Model>(nn::load_model_file(path));
  }
  return m;
}

}  // namespace

ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open service config: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad service config: ") + e.what());
  }
  ServiceConfig cfg;
  cfg.listen_address = doc.value("listen_address", cfg.listen_address);
  cfg.port = doc.value("port", cfg.port);
  cfg.store_dir = doc.value("store_dir", cfg.store_dir);
  cfg.model_paths = doc.value("models", std::vector<std::string>{});
  cfg.max_body_bytes = doc.value("max_body_bytes", cfg.max_body_bytes);
  cfg.onset.baseline_window = doc.value("onset_baseline_window", cfg.onset.baseline_window);
  cfg.onset.trigger_factor = doc.value("onset_trigger_factor", cfg.onset.trigger_factor);
  cfg.onset.persistence = doc.value("onset_persistence", cfg.onset.persistence);
  return cfg;
}

// ---------------------------------------------------------------- Service

struct Service::Impl {
  httplib::Server server;
  std::thread thread;
  std::vector<LoadedModel> models;
  std::mutex classify_mu;  // model forward passes share layer caches
  std::chrono::steady_clock::time_point started;
};

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  if (const char* env = std::getenv("OSCOPE_STORE"); env && *env) config_.store_dir = env;
  store_ = std::make_unique<TraceStore>(config_.store_dir);
  impl_ = std::make_unique<Impl>();
  for (const auto& path : config_.model_paths) impl_->models.push_back(load_any_model(path));
}

Service::~Service() {
  stop();
}

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
  if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

int Service::start() {
  auto& svr = impl_->server;
  impl_->started = std::chrono::steady_clock::now();

  svr.set_payload_max_length(config_.max_body_bytes);

  svr.Post("/v1/traces", [this](const httplib::Request& req, httplib::Response& res) {
    if (req.body.size() > config_.max_body_bytes) {
      res.status = 413;
      res.set_content(json{{"error", "trace too large"}}.dump(), "application/json");
      return;
    }
    try {
      trace_io::read_trace(req.body);  // validate before persisting
    } catch (const DataError& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    try {
      const std::string id = store_->put(req.body);
      res.status = 201;
      res.set_content(json{{"id", id}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });

  svr.Get(R"(/v1/traces/([0-9a-f]{32}))",
          [this](const httplib::Request& req, httplib::Response& res) {
            auto body = store_->get(req.matches[1].str());
            if (!body) {
              res.status = 404;
              res.set_content(json{{"error", "unknown trace id"}}.dump(), "application/json");
              return;
            }
            res.set_content(*body, "application/x-oscope-trace");
          });

  svr.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& m : impl_->models) {
      json manifest = nn::load_manifest(m.path);
      manifest.erase("tensors");
      out.push_back({{"id", m.id}, {"manifest", manifest}});
    }
    res.set_content(out.dump(), "application/json");
  });

  svr.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    const auto uptime = std::chrono::duration_cast<std::chrono::seconds>(
                            std::chrono::steady_clock::now() - impl_->started)
                            .count();
    res.set_content(json{{"status", "ok"},
                         {"store_path", store_->dir()},
                         {"traces", store_->count()},
                         {"models", impl_->models.size()},
                         {"uptime_s", uptime}}
                        .dump(),
                    "application/json");
  });

  svr.Post("/v1/classify", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      res.status = 400;
      res.set_content(json{{"error", "classify expects a json body"}}.dump(),
                      "application/json");
      return;
    }
    if (!body.contains("trace_id")) {
      res.status = 400;
      res.set_content(json{{"error", "missing trace_id"}}.dump(), "application/json");
      return;
    }
    const std::string trace_id = body["trace_id"].get<std::string>();
    const bool force = body.value("force", false);

    auto stored = store_->get(trace_id);
    if (!stored) {
      res.status = 404;
      res.set_content(json{{"error", "unknown trace id"}}.dump(), "application/json");
      return;
    }

    RawTrace trace;
    try {
      trace = trace_io::read_trace(*stored);
    } catch (const DataError& e) {
      res.status = 500;
      res.set_content(json{{"error", std::string("stored trace unreadable: ") + e.what()}}.dump(),
                      "application/json");
      return;
    }

    // Model selection: explicit id, else device-model match, else the only
    // loaded model.
    const LoadedModel* model = nullptr;
    if (body.contains("model_id")) {
      const std::string want = body["model_id"].get<std::string>();
      for (const auto& m : impl_->models)
        if (m.id == want) model = &m;
      if (!model) {
        res.status = 404;
        res.set_content(json{{"error", "unknown model id"}}.dump(), "application/json");
        return;
      }
    } else {
      for (const auto& m : impl_->models)
        if (m.net && !m.net->meta.device_model.empty() &&
            m.net->meta.device_model == trace.device.model)
          model = &m;
      if (!model && impl_->models.size() == 1) model = &impl_->models.front();
      if (!model) {
        res.status = 404;
        res.set_content(json{{"error", "no model matches; pass model_id"}}.dump(),
                        "application/json");
        return;
      }
    }

    if (auto cached = store_->get_result(trace_id, model->id)) {
      res.set_content(*cached, "application/json");
      return;
    }

    if (model->features() != trace.features ||
        (model->net ? model->net->meta.sample_interval_us : model->knn->sample_interval_us) !=
            trace.sample_interval_us) {
      res.status = 409;
      res.set_content(json{{"error", "model incompatible with trace features/cadence"}}.dump(),
                      "application/json");
      return;
    }

    // force=true falls back to the whole-trace head window, including when
    // the trace is too short for detection at all.
    std::optional<std::size_t> onset;
    std::string detect_error;
    try {
      onset = collector::detect_onset(trace, config_.onset);
    } catch (const DataError& e) {
      detect_error = e.what();
    }
    if (!onset && !force) {
      res.status = 422;
      res.set_content(
          json{{"error", detect_error.empty()
                             ? "no onset detected (pass force=true for head window)"
                             : "onset detection: " + detect_error}}
              .dump(),
          "application/json");
      return;
    }

    try {
      Window w = prep::extract_window(trace, onset.value_or(0), model->window_length());
      prep::NormMethod norm = model->net ? model->net->meta.norm : model->knn->config.norm;
      prep::NormalizedWindow nw = prep::normalize(w, norm);

      ClassificationResult result;
      {
        std::lock_guard lock(impl_->classify_mu);
        result = model->net ? nn::classify(*model->net, nw) : dtw::knn_classify(*model->knn, nw);
      }

      json out = {{"trace_id", trace_id},
                  {"model_id", model->id},
                  {"onset", onset.value_or(0)},
                  {"forced_head_window", !onset.has_value()},
                  {"label", {{"id", result.label.id}, {"name", result.label.name}}},
                  {"probabilities", result.probabilities},
                  {"latency_us", result.latency_us}};
      const std::string payload = out.dump();
      store_->put_result(trace_id, model->id, payload);
      res.set_content(payload, "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });

  int port = config_.port;
  if (port == 0) {
    port = svr.bind_to_any_port(config_.listen_address);
    if (port < 0) throw RuntimeFailure("service: cannot bind " + config_.listen_address);
  } else {
    if (!svr.bind_to_port(config_.listen_address, port))
      throw RuntimeFailure("service: cannot bind " + config_.listen_address + ":" +
                           std::to_string(port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  svr.wait_until_ready();
  return port;
}

}  // namespace oscope::service
