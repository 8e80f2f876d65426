#include "oscope/trace_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace oscope::trace_io {

namespace {

json meta_to_json(const RawTrace& t) {
  json features = json::array();
  for (const auto& f : t.features)
    features.push_back({{"syscall", f.syscall}, {"field", f.field}});
  json meta = {
      {"format_version", 1},
      {"features", features},
      {"sample_interval_us", t.sample_interval_us},
      {"start_time_unix_us", t.start_time_unix_us},
      {"device",
       {{"model", t.device.model},
        {"os_version", t.device.os_version},
        {"hostname", t.device.hostname}}},
  };
  if (t.label) meta["label"] = {{"id", t.label->id}, {"name", t.label->name}};
  return meta;
}

void meta_from_json(const json& meta, RawTrace& t) {
  if (!meta.contains("format_version") || meta["format_version"].get<int>() != 1)
    throw DataError("trace: unsupported or missing format_version");
  if (!meta.contains("features") || !meta["features"].is_array() || meta["features"].empty())
    throw DataError("trace: missing features");
  for (const auto& f : meta["features"])
    t.features.push_back({f.at("syscall").get<std::string>(), f.at("field").get<std::string>()});
  t.sample_interval_us = meta.at("sample_interval_us").get<std::int64_t>();
  if (t.sample_interval_us <= 0) throw DataError("trace: sample_interval_us must be > 0");
  t.start_time_unix_us = meta.value("start_time_unix_us", std::int64_t{0});
  if (meta.contains("label")) {
    t.label = BehaviorLabel{meta["label"].at("id").get<int>(),
                            meta["label"].at("name").get<std::string>()};
  }
  if (meta.contains("device")) {
    const auto& d = meta["device"];
    t.device.model = d.value("model", "");
    t.device.os_version = d.value("os_version", "");
    t.device.hostname = d.value("hostname", "");
  }
}

}  // namespace

std::string write_trace(const RawTrace& trace) {
  trace.validate();
  std::string out = meta_to_json(trace).dump();
  out.push_back('\n');
  const std::size_t n = trace.n_features();
  char buf[24];
  for (std::size_t t = 0; t < trace.rows(); ++t) {
    for (std::size_t f = 0; f < n; ++f) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), trace.at(t, f));
      (void)ec;
      out.append(buf, end);
      out.push_back(f + 1 < n ? ',' : '\n');
    }
  }
  return out;
}

void write_trace_file(const RawTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot open for write: " + path);
  std::string body = write_trace(trace);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw RuntimeFailure("short write: " + path);
}

RawTrace read_trace(const std::string& body) {
  std::size_t eol = body.find('\n');
  if (eol == std::string::npos) throw DataError("trace: missing metadata line");

  RawTrace t;
  json meta;
  try {
    meta = json::parse(body.substr(0, eol));
  } catch (const json::exception& e) {
    throw DataError(std::string("trace: bad metadata json: ") + e.what());
  }
  meta_from_json(meta, t);

  const std::size_t n = t.features.size();
  const char* p = body.data() + eol + 1;
  const char* end = body.data() + body.size();
  while (p < end) {
    const char* line_end = static_cast<const char*>(memchr(p, '\n', static_cast<size_t>(end - p)));
    if (!line_end) throw DataError("trace: final sample line not newline-terminated");
    std::size_t col = 0;
    while (p < line_end) {
      std::uint64_t v = 0;
      auto [next, ec] = std::from_chars(p, line_end, v);
      if (ec != std::errc{} || (next < line_end && *next != ','))
        throw DataError("trace: malformed counter value");
      if (col >= n) throw DataError("trace: too many columns in sample line");
      t.samples.push_back(v);
      ++col;
      p = next < line_end ? next + 1 : next;
    }
    if (col != n) throw DataError("trace: sample line has wrong column count");
    p = line_end + 1;
  }
  t.validate();
  return t;
}

RawTrace read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open trace file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return read_trace(ss.str());
}

void write_dataset_dir(const Dataset& ds, const std::string& dir,
                       std::int64_t sample_interval_us) {
  fs::create_directories(dir);
  json manifest = {
      {"format_version", 1},
      {"split_seed", ds.split_seed},
      {"classes", ds.class_names()},
      {"train_indices", ds.train_indices},
      {"test_indices", ds.test_indices},
      {"count", ds.windows.size()},
  };
  {
    std::ofstream out(fs::path(dir) / "dataset.json", std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write dataset manifest in " + dir);
    out << manifest.dump(2) << "\n";
  }
  char name[32];
  for (std::size_t i = 0; i < ds.windows.size(); ++i) {
    const Window& w = ds.windows[i];
    RawTrace t;
    t.features = w.features;
    t.sample_interval_us = sample_interval_us;
    t.start_time_unix_us = static_cast<std::int64_t>(i) * sample_interval_us *
                           static_cast<std::int64_t>(w.T);
    t.label = w.label;
    t.device = {"oscope-sim", "1", "sim"};
    t.samples.reserve(w.values.size());
    for (double v : w.values)
      t.samples.push_back(static_cast<std::uint64_t>(std::llround(std::max(0.0, v))));
    std::snprintf(name, sizeof(name), "win_%06zu.trace", i);
    write_trace_file(t, (fs::path(dir) / name).string());
  }
}

Dataset read_dataset_dir(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "dataset.json");
  if (!in) throw DataError("missing dataset.json in " + dir);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad dataset.json: ") + e.what());
  }

  Dataset ds;
  ds.split_seed = manifest.value("split_seed", std::uint64_t{0});
  ds.train_indices = manifest.at("train_indices").get<std::vector<std::size_t>>();
  ds.test_indices = manifest.at("test_indices").get<std::vector<std::size_t>>();
  const std::size_t count = manifest.at("count").get<std::size_t>();

  char name[32];
  ds.windows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::snprintf(name, sizeof(name), "win_%06zu.trace", i);
    RawTrace t = read_trace_file((fs::path(dir) / name).string());
    Window w;
    w.features = t.features;
    w.T = t.rows();
    w.label = t.label;
    w.values.reserve(t.samples.size());
    for (std::uint64_t v : t.samples) w.values.push_back(static_cast<double>(v));
    ds.windows.push_back(std::move(w));
  }
  return ds;
}

}  // namespace oscope::trace_io
