// oscope - syscall return-value side-channel toolkit.
// Subcommands: collect | simulate | rank | train | eval | classify | serve | gradcheck

#include <cinttypes>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "oscope/collector.hpp"
#include "oscope/dtwknn.hpp"
#include "oscope/nn/gradcheck.hpp"
#include "oscope/nn/train.hpp"
#include "oscope/ranker.hpp"
#include "oscope/service.hpp"
#include "oscope/signalprep.hpp"
#include "oscope/simulator.hpp"
#include "oscope/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace oscope;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

std::string join_args(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

std::vector<FeatureId> parse_features(const std::string& spec) {
  if (spec.empty() || spec == "all") return feature_catalog();
  std::vector<FeatureId> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto dot = item.find('.');
    if (dot == std::string::npos)
      throw DataError("feature must be syscall.field, got: " + item);
    out.push_back({item.substr(0, dot), item.substr(dot + 1)});
  }
  if (out.empty()) throw DataError("no features given");
  return out;
}

void print_confusion(const std::vector<std::size_t>& confusion, std::size_t c,
                     const std::vector<std::string>& classes) {
  std::printf("confusion (rows = true class):\n");
  for (std::size_t i = 0; i < c; ++i) {
    std::printf("  %-26s", i < classes.size() ? classes[i].c_str() : "");
    for (std::size_t j = 0; j < c; ++j) std::printf(" %4zu", confusion[i * c + j]);
    std::printf("\n");
  }
}

sim::NoiseModel noise_from_cli(double sigma, double rho, double drift, double baseline_jitter,
                               std::size_t bg, double bg_rate) {
  sim::NoiseModel m = sim::default_noise();
  if (sigma >= 0) m.sigma = sigma;
  if (rho >= 0) m.ar1_rho = rho;
  if (drift >= 0) m.drift_per_sample = drift;
  if (baseline_jitter >= 0) m.baseline_jitter = baseline_jitter;
  if (bg != static_cast<std::size_t>(-1)) m.background_processes = bg;
  if (bg_rate >= 0) m.background_event_rate = bg_rate;
  return m;
}

Dataset downsample_dataset(const Dataset& ds, std::size_t stride) {
  if (stride <= 1) return ds;
  Dataset out = ds;
  for (auto& w : out.windows) w = prep::downsample(w, stride);
  return out;
}

int cmd_collect(const std::string& features_spec, double interval_ms, double duration_s,
                const std::string& statvfs_path, std::string endpoint, const std::string& out_path,
                int count, bool detect, const std::string& label_name, int label_id) {
  collector::SamplerConfig cfg;
  cfg.features = parse_features(features_spec);
  cfg.interval_us = static_cast<std::int64_t>(interval_ms * 1000.0);
  cfg.duration_s = duration_s;
  cfg.statvfs_path = statvfs_path;

  if (const char* env = std::getenv("OSCOPE_ENDPOINT"); env && *env) endpoint = env;

  // Transmission runs on its own worker behind a bounded queue so the
  // sampling cadence never waits on the network.
  std::unique_ptr<collector::TraceSender> sender;
  if (!endpoint.empty()) {
    sender = std::make_unique<collector::TraceSender>(8, [&endpoint](const RawTrace& t) {
      const std::string id = collector::upload(t, endpoint);
      std::printf("uploaded %s\n", id.c_str());
    });
  }

  for (int i = 0; i < count; ++i) {
    auto rec = collector::record(cfg);
    if (!label_name.empty()) rec.trace.label = BehaviorLabel{label_id, label_name};
    std::fprintf(stderr, "collected %zu rows, mean interval %.2f us, %zu failed bursts\n",
                 rec.stats.rows, rec.stats.mean_interval_us, rec.stats.failed_bursts);
    if (detect) {
      auto onset = collector::detect_onset(rec.trace);
      if (onset) std::printf("onset %zu\n", *onset);
      else std::printf("onset none\n");
    }
    if (!out_path.empty()) {
      std::string path = out_path;
      if (count > 1) path += "." + std::to_string(i);
      trace_io::write_trace_file(rec.trace, path);
      std::printf("wrote %s\n", path.c_str());
    }
    if (sender) sender->enqueue(std::move(rec.trace));
  }
  if (sender) {
    sender->drain_and_stop();
    std::fprintf(stderr, "sent %zu, dropped %zu, failures %zu\n", sender->sent(),
                 sender->dropped(), sender->send_failures());
    if (sender->send_failures() > 0)
      throw RuntimeFailure("some uploads failed; see log above");
  }
  return kExitOk;
}

int cmd_simulate(const std::string& out_dir, std::size_t per_class, std::uint64_t seed,
                 const std::string& catalog_path, std::size_t trace_len,
                 std::size_t template_start, bool multi, const std::string& save_catalog_path,
                 const sim::NoiseModel& noise) {
  auto catalog = catalog_path.empty() || catalog_path == "builtin"
                     ? sim::default_catalog()
                     : sim::load_catalog(catalog_path);

  if (!save_catalog_path.empty()) {
    sim::save_catalog(catalog, noise, save_catalog_path);
    std::printf("wrote catalog %s\n", save_catalog_path.c_str());
    if (out_dir.empty()) return kExitOk;
  }

  sim::SynthOptions opts;
  opts.trace_len = trace_len;
  opts.template_start = template_start;

  Dataset ds;
  if (multi) {
    auto combos = sim::multi_behavior_catalog();
    std::vector<Window> windows;
    sim::SynthOptions mopts = opts;
    if (mopts.trace_len < 16000) mopts.trace_len = 16000;
    for (std::size_t k = 0; k < combos.size(); ++k) {
      std::vector<const sim::BehaviorSignature*> seq;
      for (std::size_t part : combos[k].parts) seq.push_back(&catalog[part]);
      for (std::size_t r = 0; r < per_class; ++r) {
        const std::uint64_t s = splitmix64(seed ^ splitmix64((k << 32) | r));
        RawTrace t = sim::synth_multi_behavior(seq, {100, 400}, noise, s, mopts,
                                               combos[k].label);
        windows.push_back(prep::extract_window(t, 0, t.rows()));
      }
    }
    ds = make_dataset(std::move(windows), seed);
  } else {
    ds = sim::synth_dataset(catalog, noise, per_class, seed, opts);
  }

  trace_io::write_dataset_dir(ds, out_dir);
  std::printf("wrote %zu windows (%zu train / %zu test) to %s\n", ds.windows.size(),
              ds.train_indices.size(), ds.test_indices.size(), out_dir.c_str());
  return kExitOk;
}

int cmd_rank(const std::vector<std::string>& inputs, bool raw, const std::string& format) {
  std::vector<Window> repeats;
  for (const auto& input : inputs) {
    if (fs::is_directory(input)) {
      std::vector<fs::path> paths;
      for (const auto& e : fs::directory_iterator(input))
        if (e.path().extension() == ".trace") paths.push_back(e.path());
      std::sort(paths.begin(), paths.end());
      for (const auto& p : paths) {
        RawTrace t = trace_io::read_trace_file(p.string());
        repeats.push_back(prep::extract_window(t, 0, t.rows()));
      }
    } else {
      RawTrace t = trace_io::read_trace_file(input);
      repeats.push_back(prep::extract_window(t, 0, t.rows()));
    }
  }
  if (repeats.size() < 2) throw DataError("rank needs at least 2 traces");

  RankingReport report = ranker::rank_windows(repeats, {.normalize = !raw});
  if (format == "ndjson") {
    for (const auto& e : report.entries) {
      json row = {{"type", "rank"},
                  {"syscall", e.feature.syscall},
                  {"field", e.feature.field},
                  {"avg_distance", e.avg_distance}};
      std::printf("%s\n", row.dump().c_str());
    }
  } else {
    std::printf("%-12s %-20s %s\n", "syscall", "return value", "avg distance");
    for (const auto& e : report.entries)
      std::printf("%-12s %-20s %.4f\n", e.feature.syscall.c_str(), e.feature.field.c_str(),
                  e.avg_distance);
  }
  return kExitOk;
}

int cmd_train(const std::string& data_dir, const std::string& model_kind,
              const std::string& out_path, std::size_t epochs, std::size_t batch, double lr,
              const std::string& norm, std::uint64_t seed, std::size_t band, std::size_t k,
              std::size_t stride, bool f32, const std::string& device_model, bool quiet) {
  Dataset ds = trace_io::read_dataset_dir(data_dir);
  if (stride > 1) ds = downsample_dataset(ds, stride);
  const std::size_t T = ds.windows.front().T;
  const std::size_t n = ds.windows.front().n_features();
  const std::size_t c = ds.n_classes();

  if (model_kind == "dtwknn") {
    dtw::KnnConfig cfg;
    cfg.k = k;
    cfg.band = band == 0 ? dtw::kNoBand : band;
    cfg.norm = prep::norm_method_from_string(norm);
    dtw::KnnModel model = dtw::knn_build(ds, cfg);
    dtw::save_knn(model, out_path);
    std::printf("wrote dtwknn model (%zu training windows) to %s\n", model.size(),
                out_path.c_str());
    return kExitOk;
  }
  if (model_kind != "cnn_gru" && model_kind != "gru_only")
    throw DataError("unknown model kind: " + model_kind);

  nn::TrainConfig config;
  config.learning_rate = lr;
  config.epochs = epochs;
  config.batch_size = batch;
  config.seed = seed;
  config.f32 = f32;

  nn::Model model = model_kind == "gru_only" ? nn::build_gru_only(n, c, T, config)
                                             : nn::build_cnn_gru(n, c, T, config);
  model.set_f32(f32);
  model.meta.norm = prep::norm_method_from_string(norm);
  model.meta.features = ds.windows.front().features;
  model.meta.classes = ds.class_names();
  model.meta.device_model = device_model;

  nn::train(model, ds, [&](const nn::EpochStats& s) {
    if (!quiet)
      std::fprintf(stderr, "epoch %zu loss %.4f acc %.4f\n", s.epoch, s.loss, s.accuracy);
  });
  nn::save_model(model, out_path);
  std::printf("wrote %s model to %s\n", model_kind.c_str(), out_path.c_str());
  return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir, std::size_t stride,
             bool k_sweep, const std::string& format, const std::string& invocation) {
  Dataset ds = trace_io::read_dataset_dir(data_dir);
  if (stride > 1) ds = downsample_dataset(ds, stride);

  json manifest = nn::load_manifest(model_path);
  const bool is_knn = manifest.value("model_type", "") == "dtwknn";

  std::printf("# %s\n# dataset %s seed %" PRIu64 " (%zu test windows)\n", invocation.c_str(),
              data_dir.c_str(), static_cast<std::uint64_t>(ds.split_seed),
              ds.test_indices.size());

  if (is_knn) {
    dtw::KnnModel model = dtw::load_knn(model_path);
    std::vector<std::size_t> ks = k_sweep ? std::vector<std::size_t>{1, 3, 5, 7}
                                          : std::vector<std::size_t>{model.config.k};
    dtw::KnnEval eval = dtw::knn_eval(model, ds, ks);
    if (format == "ndjson") {
      for (const auto& [kk, acc] : eval.accuracy_by_k) {
        json row = {{"type", "eval"}, {"model", "dtwknn"}, {"k", kk}, {"accuracy", acc}};
        std::printf("%s\n", row.dump().c_str());
      }
    } else {
      for (const auto& [kk, acc] : eval.accuracy_by_k)
        std::printf("dtwknn K=%zu accuracy %.4f\n", kk, acc);
      std::printf("best K=%zu accuracy %.4f\n", eval.best_k, eval.best_accuracy);
      print_confusion(eval.confusion, model.n_classes, model.classes);
    }
    return kExitOk;
  }

  nn::Model model = nn::load_model_file(model_path);
  nn::EvalResult eval = nn::evaluate(model, ds);
  if (format == "ndjson") {
    json row = {{"type", "eval"},
                {"model", model.meta.model_type},
                {"accuracy", eval.accuracy},
                {"correct", eval.correct},
                {"total", eval.total},
                {"mean_latency_us", eval.mean_latency_us}};
    std::printf("%s\n", row.dump().c_str());
  } else {
    std::printf("%s accuracy %.4f (%zu/%zu)\n", model.meta.model_type.c_str(), eval.accuracy,
                eval.correct, eval.total);
    print_confusion(eval.confusion, model.meta.c, model.meta.classes);
  }
  return kExitOk;
}

int cmd_classify(const std::string& model_path, const std::string& trace_path, bool force,
                 const std::string& format) {
  RawTrace trace = trace_io::read_trace_file(trace_path);
  json manifest = nn::load_manifest(model_path);
  const bool is_knn = manifest.value("model_type", "") == "dtwknn";

  auto onset = collector::detect_onset(trace);
  if (!onset && !force) throw DataError("no onset detected; rerun with --force for head window");

  ClassificationResult result;
  if (is_knn) {
    dtw::KnnModel model = dtw::load_knn(model_path);
    Window w = prep::extract_window(trace, onset.value_or(0), model.T);
    result = dtw::knn_classify(model, prep::normalize(w, model.config.norm));
  } else {
    nn::Model model = nn::load_model_file(model_path);
    Window w = prep::extract_window(trace, onset.value_or(0), model.meta.T);
    result = nn::classify(model, prep::normalize(w, model.meta.norm));
  }

  if (format == "ndjson") {
    json row = {{"type", "classify"},
                {"label", {{"id", result.label.id}, {"name", result.label.name}}},
                {"onset", onset.value_or(0)},
                {"probabilities", result.probabilities},
                {"latency_us", result.latency_us}};
    std::printf("%s\n", row.dump().c_str());
  } else {
    std::printf("label %d (%s), onset %zu, latency %.2f ms\n", result.label.id,
                result.label.name.c_str(), onset.value_or(0),
                static_cast<double>(result.latency_us) / 1000.0);
  }
  return kExitOk;
}

int cmd_serve(const std::string& config_path, const std::string& listen, int port,
              const std::string& store_dir, const std::vector<std::string>& models) {
  service::ServiceConfig cfg;
  if (!config_path.empty()) cfg = service::load_service_config(config_path);
  if (!listen.empty()) cfg.listen_address = listen;
  if (port >= 0) cfg.port = port;
  if (!store_dir.empty()) cfg.store_dir = store_dir;
  for (const auto& m : models) cfg.model_paths.push_back(m);

  service::Service svc(cfg);
  const int bound = svc.start();
  std::printf("oscope service on %s:%d, store %s, %zu model(s)\n", cfg.listen_address.c_str(),
              bound, svc.store().dir().c_str(), cfg.model_paths.size());
  std::fflush(stdout);
  for (;;) std::this_thread::sleep_for(std::chrono::seconds(3600));
  return kExitOk;
}

int cmd_gradcheck(bool full, std::uint64_t seed) {
  nn::TrainConfig cfg;
  cfg.seed = seed;
  const std::size_t T = full ? 200 : 40;
  const std::size_t n = 2, c = 3, B = 4;
  nn::Model model = nn::build_small_cnn_gru(T, n, c, cfg);

  Rng rng(splitmix64(seed ^ 0x67726164ULL));
  nn::Tensor x({B, T, n});
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  std::vector<int> labels(B);
  for (std::size_t i = 0; i < B; ++i) labels[i] = static_cast<int>(i % c);

  auto report = nn::gradcheck(model, x, labels);
  std::printf("gradcheck: %zu parameters, max relative error %.3e (%s[%zu])\n",
              report.params_checked, report.max_rel_err, report.worst_param.c_str(),
              report.worst_index);
  if (report.max_rel_err >= 1e-4) {
    std::fprintf(stderr, "gradcheck FAILED (>= 1e-4)\n");
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oscope: syscall return-value side-channel toolkit"};
  app.require_subcommand(1);
  const std::string invocation = join_args(argc, argv);

  // collect
  auto* collect = app.add_subcommand("collect", "sample syscall counters on this host");
  std::string features = "all", statvfs_path = "/data", endpoint, out_path, label_name;
  double interval_ms = 1.0, duration_s = 5.0;
  int count = 1, label_id = 0;
  bool detect = false;
  collect->add_option("--features", features, "comma list of syscall.field, or 'all'");
  collect->add_option("--interval-ms", interval_ms, "sampling interval, ms")
      ->check(CLI::PositiveNumber);
  collect->add_option("--duration-s", duration_s, "duration per trace, s");
  collect->add_option("--statvfs-path", statvfs_path, "filesystem probed by statvfs");
  collect->add_option("--endpoint", endpoint, "upload endpoint (env OSCOPE_ENDPOINT overrides)");
  collect->add_option("--out", out_path, "write trace file(s)");
  collect->add_option("--count", count, "number of traces");
  collect->add_option("--label", label_name, "attach behavior label name");
  collect->add_option("--label-id", label_id, "attach behavior label id");
  collect->add_flag("--detect-onset", detect, "print detected onset index");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "emit a labeled synthetic dataset");
  std::string out_dir, catalog_path = "builtin", save_catalog_path;
  std::size_t per_class = 200, trace_len = kWindowLength, template_start = 0;
  std::uint64_t seed = 1;
  bool multi = false;
  double nsigma = -1, nrho = -1, ndrift = -1, nbase = -1, nbg_rate = -1;
  std::size_t nbg = static_cast<std::size_t>(-1);
  simulate->add_option("--out", out_dir, "output dataset directory");
  simulate->add_option("--per-class", per_class, "traces per behavior");
  simulate->add_option("--seed", seed, "master seed");
  simulate->add_option("--catalog", catalog_path, "'builtin' or a catalog json path");
  simulate->add_option("--trace-len", trace_len, "samples per trace");
  simulate->add_option("--template-start", template_start, "idle lead-in samples");
  simulate->add_flag("--multi", multi, "41-category multi-behavior dataset");
  simulate->add_option("--save-catalog", save_catalog_path, "write the catalog as json");
  simulate->add_option("--noise-sigma", nsigma, "AR(1) stationary std");
  simulate->add_option("--noise-rho", nrho, "AR(1) rho");
  simulate->add_option("--noise-drift", ndrift, "drift per sample");
  simulate->add_option("--noise-baseline-jitter", nbase, "per-trace baseline offset bound");
  simulate->add_option("--noise-background", nbg, "background process count");
  simulate->add_option("--noise-background-rate", nbg_rate, "background events/s");

  // rank
  auto* rank = app.add_subcommand("rank", "rank feature vulnerability over repeated traces");
  std::vector<std::string> rank_inputs;
  bool raw = false;
  std::string rank_format = "table";
  rank->add_option("--in", rank_inputs, "trace files or directories")->required();
  rank->add_flag("--raw", raw, "rank on raw counters instead of min-max normalized");
  rank->add_option("--format", rank_format, "table | ndjson");

  // train
  auto* train = app.add_subcommand("train", "fit a classifier and write a model file");
  std::string data_dir, model_kind = "cnn_gru", model_out = "model.oscm", norm = "minmax";
  std::string device_model;
  std::size_t epochs = 100, batch = 32, band = 500, knn_k = 3, stride = 1;
  double lr = 0.001;
  bool f32 = false, quiet = false;
  std::uint64_t train_seed = 1;
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--model", model_kind, "cnn_gru | gru_only | dtwknn");
  train->add_option("--out", model_out, "model file path");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--batch", batch, "mini-batch size");
  train->add_option("--lr", lr, "learning rate");
  train->add_option("--norm", norm, "minmax | mean | zscore | meansub | none");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--band", band, "dtw Sakoe-Chiba band (0 = unbanded)");
  train->add_option("--k", knn_k, "dtwknn neighbor count");
  train->add_option("--stride", stride, "downsample stride (cadence ablation)");
  train->add_flag("--f32", f32, "32-bit compute mode");
  train->add_flag("--quiet", quiet, "suppress per-epoch log");
  train->add_option("--device-model", device_model, "device model tag for service matching");

  // eval
  auto* eval = app.add_subcommand("eval", "accuracy + confusion on the test split");
  std::string eval_model, eval_data, eval_format = "table";
  std::size_t eval_stride = 1;
  bool k_sweep = false;
  eval->add_option("--model", eval_model, "model file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--stride", eval_stride, "downsample stride (cadence ablation)");
  eval->add_flag("--k-sweep", k_sweep, "sweep K in {1,3,5,7} for dtwknn");
  eval->add_option("--format", eval_format, "table | ndjson");

  // classify
  auto* classify = app.add_subcommand("classify", "run one trace through a model");
  std::string cls_model, cls_trace, cls_format = "table";
  bool force = false;
  classify->add_option("--model", cls_model, "model file")->required();
  classify->add_option("--trace", cls_trace, "trace file")->required();
  classify->add_flag("--force", force, "use head window when no onset is detected");
  classify->add_option("--format", cls_format, "table | ndjson");

  // serve
  auto* serve = app.add_subcommand("serve", "run the trace ingestion/classification service");
  std::string srv_config, srv_listen, srv_store;
  int srv_port = -1;
  std::vector<std::string> srv_models;
  serve->add_option("--config", srv_config, "service config json");
  serve->add_option("--listen", srv_listen, "listen address");
  serve->add_option("--port", srv_port, "listen port (0 = any)");
  serve->add_option("--store", srv_store, "trace store directory (env OSCOPE_STORE overrides)");
  serve->add_option("--model", srv_models, "model file(s) to load");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  bool gc_full = false;
  std::uint64_t gc_seed = 1;
  gradcheck->add_flag("--full", gc_full, "larger variant (T=200)");
  gradcheck->add_option("--seed", gc_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (collect->parsed())
      return cmd_collect(features, interval_ms, duration_s, statvfs_path, endpoint, out_path,
                         count, detect, label_name, label_id);
    if (simulate->parsed()) {
      if (out_dir.empty() && save_catalog_path.empty())
        throw DataError("simulate needs --out or --save-catalog");
      return cmd_simulate(out_dir, per_class, seed, catalog_path, trace_len, template_start,
                          multi, save_catalog_path,
                          noise_from_cli(nsigma, nrho, ndrift, nbase, nbg, nbg_rate));
    }
    if (rank->parsed()) return cmd_rank(rank_inputs, raw, rank_format);
    if (train->parsed())
      return cmd_train(data_dir, model_kind, model_out, epochs, batch, lr, norm, train_seed,
                       band, knn_k, stride, f32, device_model, quiet);
    if (eval->parsed())
      return cmd_eval(eval_model, eval_data, eval_stride, k_sweep, eval_format, invocation);
    if (classify->parsed()) return cmd_classify(cls_model, cls_trace, force, cls_format);
    if (serve->parsed()) return cmd_serve(srv_config, srv_listen, srv_port, srv_store, srv_models);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_full, gc_seed);
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const RuntimeFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
