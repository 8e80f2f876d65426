#include "oscope/nn/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace oscope::nn {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "model container assumes a little-endian host");

Tensor Model::forward_logits(const Tensor& x, bool training) {
  Tensor cur = x;
  for (auto& layer : layers) cur = layer->forward(cur, training);
  return cur;
}

Tensor Model::forward(const Tensor& x, bool training) {
  Tensor logits = forward_logits(x, training);
  softmax_rows(logits);
  return logits;
}

void softmax_rows(Tensor& logits) {
  if (logits.rank() != 2) throw DataError("softmax: expects (B, c)");
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  for (std::size_t b = 0; b < B; ++b) {
    double* row = logits.data.data() + b * C;
    double mx = row[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double sum = 0;
    for (std::size_t c = 0; c < C; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < C; ++c) row[c] /= sum;
  }
}

std::vector<ParamRef> Model::params() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    for (auto& p : layers[i]->params())
      out.push_back({"layer" + std::to_string(i) + "." + p.name, p.value, p.grad});
  return out;
}

std::vector<ParamRef> Model::state_tensors() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    for (auto& p : layers[i]->state_tensors())
      out.push_back({"layer" + std::to_string(i) + "." + p.name, p.value, nullptr});
  return out;
}

std::size_t Model::param_count() {
  std::size_t n = 0;
  for (auto& p : params()) n += p.value->size();
  return n;
}

void Model::set_f32(bool on) {
  config.f32 = on;
  for (auto& l : layers) l->f32 = on;
}

std::vector<std::vector<std::size_t>> Model::layer_shapes() const {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l->output_shape());
  return out;
}

Model build_from_specs(std::vector<LayerSpec> specs, const ModelMeta& meta,
                       const TrainConfig& config) {
  Model m;
  m.meta = meta;
  m.config = config;
  Rng rng(splitmix64(config.seed ^ 0x6f73636f70653143ULL));
  std::vector<std::size_t> shape = {meta.T, meta.n};
  for (auto& spec : specs) {
    auto layer = make_layer(spec);
    layer->init(shape, rng);
    shape = layer->output_shape();
    layer->f32 = config.f32;
    m.layers.push_back(std::move(layer));
  }
  if (shape != std::vector<std::size_t>{meta.c})
    throw DataError("model: head does not produce c outputs");
  return m;
}

Model build_cnn_gru(std::size_t n, std::size_t c, std::size_t T, const TrainConfig& config) {
  if (n < 1 || c < 2) throw DataError("build_cnn_gru: need n >= 1 and c >= 2");
  std::vector<LayerSpec> specs;
  specs.push_back({.kind = LayerKind::reshape, .fold = 10});
  const std::size_t filters[3] = {64, 128, 256};
  for (std::size_t block = 0; block < 3; ++block) {
    specs.push_back({.kind = LayerKind::conv1d,
                     .filters = filters[block],
                     .kernel = 2,
                     .stride = 1,
                     .leaky_slope = 0.3});
    specs.push_back({.kind = LayerKind::maxpool1d, .kernel = 3, .stride = 2});
    specs.push_back({.kind = LayerKind::batchnorm});
  }
  specs.push_back({.kind = LayerKind::gru, .units = 128, .return_sequences = true});
  specs.push_back({.kind = LayerKind::batchnorm});
  specs.push_back({.kind = LayerKind::flatten});
  specs.push_back({.kind = LayerKind::dense, .units = c, .softmax = true});

  ModelMeta meta;
  meta.model_type = "cnn_gru";
  meta.T = T;
  meta.n = n;
  meta.c = c;
  return build_from_specs(std::move(specs), meta, config);
}

Model build_gru_only(std::size_t n, std::size_t c, std::size_t T, const TrainConfig& config) {
  if (n < 1 || c < 2) throw DataError("build_gru_only: need n >= 1 and c >= 2");
  std::vector<LayerSpec> specs;
  specs.push_back({.kind = LayerKind::reshape, .fold = 10});
  specs.push_back({.kind = LayerKind::gru, .units = 128, .return_sequences = false});
  specs.push_back({.kind = LayerKind::flatten});
  specs.push_back({.kind = LayerKind::dense, .units = c, .softmax = true});

  ModelMeta meta;
  meta.model_type = "gru_only";
  meta.T = T;
  meta.n = n;
  meta.c = c;
  return build_from_specs(std::move(specs), meta, config);
}

Model build_small_cnn_gru(std::size_t T, std::size_t n, std::size_t c,
                          const TrainConfig& config) {
  std::vector<LayerSpec> specs;
  specs.push_back({.kind = LayerKind::reshape, .fold = 4});
  specs.push_back(
      {.kind = LayerKind::conv1d, .filters = 8, .kernel = 2, .stride = 1, .leaky_slope = 0.3});
  specs.push_back({.kind = LayerKind::maxpool1d, .kernel = 3, .stride = 2});
  specs.push_back({.kind = LayerKind::batchnorm});
  specs.push_back({.kind = LayerKind::gru, .units = 6, .return_sequences = true});
  specs.push_back({.kind = LayerKind::batchnorm});
  specs.push_back({.kind = LayerKind::flatten});
  specs.push_back({.kind = LayerKind::dense, .units = c, .softmax = true});

  ModelMeta meta;
  meta.model_type = "cnn_gru_small";
  meta.T = T;
  meta.n = n;
  meta.c = c;
  return build_from_specs(std::move(specs), meta, config);
}

Model build_dense_only(std::size_t T, std::size_t n, std::size_t c, const TrainConfig& config) {
  std::vector<LayerSpec> specs;
  specs.push_back({.kind = LayerKind::flatten});
  specs.push_back({.kind = LayerKind::dense, .units = c, .softmax = true});

  ModelMeta meta;
  meta.model_type = "dense_only";
  meta.T = T;
  meta.n = n;
  meta.c = c;
  return build_from_specs(std::move(specs), meta, config);
}

// ------------------------------------------------------------- container

namespace {

constexpr char kMagic[4] = {'O', 'S', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

json spec_to_json(const LayerSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"fold", s.fold},
          {"filters", s.filters},
          {"kernel", s.kernel},
          {"stride", s.stride},
          {"leaky_slope", s.leaky_slope},
          {"units", s.units},
          {"return_sequences", s.return_sequences},
          {"softmax", s.softmax},
          {"bn_momentum", s.bn_momentum},
          {"bn_epsilon", s.bn_epsilon}};
}

LayerSpec spec_from_json(const json& j) {
  LayerSpec s;
  s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  s.fold = j.value("fold", std::size_t{0});
  s.filters = j.value("filters", std::size_t{0});
  s.kernel = j.value("kernel", std::size_t{0});
  s.stride = j.value("stride", std::size_t{1});
  s.leaky_slope = j.value("leaky_slope", 0.0);
  s.units = j.value("units", std::size_t{0});
  s.return_sequences = j.value("return_sequences", true);
  s.softmax = j.value("softmax", false);
  s.bn_momentum = j.value("bn_momentum", 0.99);
  s.bn_epsilon = j.value("bn_epsilon", 1e-3);
  return s;
}

json meta_to_json(const ModelMeta& m) {
  json feats = json::array();
  for (const auto& f : m.features) feats.push_back({{"syscall", f.syscall}, {"field", f.field}});
  return {{"model_type", m.model_type},
          {"T", m.T},
          {"n", m.n},
          {"c", m.c},
          {"features", feats},
          {"classes", m.classes},
          {"norm", prep::to_string(m.norm)},
          {"sample_interval_us", m.sample_interval_us},
          {"device_model", m.device_model}};
}

ModelMeta meta_from_json(const json& j) {
  ModelMeta m;
  m.model_type = j.value("model_type", "cnn_gru");
  m.T = j.at("T").get<std::size_t>();
  m.n = j.at("n").get<std::size_t>();
  m.c = j.at("c").get<std::size_t>();
  for (const auto& f : j.value("features", json::array()))
    m.features.push_back({f.at("syscall").get<std::string>(), f.at("field").get<std::string>()});
  m.classes = j.value("classes", std::vector<std::string>{});
  m.norm = prep::norm_method_from_string(j.value("norm", "minmax"));
  m.sample_interval_us = j.value("sample_interval_us", std::int64_t{1000});
  m.device_model = j.value("device_model", "");
  return m;
}

}  // namespace

void save_container(const Container& c, const std::string& path) {
  json manifest = c.manifest;
  json tensor_table = json::array();
  for (const auto& [name, t] : c.tensors)
    tensor_table.push_back({{"name", name}, {"shape", t.shape}});
  manifest["tensors"] = tensor_table;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write model file: " + path);
  const std::string mbytes = manifest.dump();
  const std::uint64_t mlen = mbytes.size();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mbytes.data(), static_cast<std::streamsize>(mbytes.size()));
  for (const auto& [name, t] : c.tensors)
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!out) throw RuntimeFailure("short write: " + path);
}

Container load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t mlen = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not an OSC1 model file: " + path);
  if (version != kVersion)
    throw DataError("unsupported model container version " + std::to_string(version));

  std::string mbytes(mlen, '\0');
  in.read(mbytes.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw DataError("truncated model manifest: " + path);

  Container c;
  try {
    c.manifest = json::parse(mbytes);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad model manifest: ") + e.what());
  }
  for (const auto& entry : c.manifest.value("tensors", json::array())) {
    Tensor t(entry.at("shape").get<std::vector<std::size_t>>());
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw DataError("truncated tensor blob in " + path);
    c.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return c;
}

void save_model(Model& model, const std::string& path) {
  Container c;
  json arch = json::array();
  for (const auto& l : model.layers) arch.push_back(spec_to_json(l->spec()));
  c.manifest = {{"arch", arch},
                {"meta", meta_to_json(model.meta)},
                {"config",
                 {{"learning_rate", model.config.learning_rate},
                  {"epochs", model.config.epochs},
                  {"batch_size", model.config.batch_size},
                  {"seed", model.config.seed},
                  {"f32", model.config.f32}}}};
  for (auto& p : model.params()) c.tensors.emplace_back(p.name, *p.value);
  for (auto& p : model.state_tensors()) c.tensors.emplace_back(p.name, *p.value);
  save_container(c, path);
}

Model load_model_file(const std::string& path) {
  Container c = load_container(path);
  if (!c.manifest.contains("arch"))
    throw DataError("model file has no network architecture: " + path);

  std::vector<LayerSpec> specs;
  for (const auto& js : c.manifest["arch"]) specs.push_back(spec_from_json(js));
  ModelMeta meta = meta_from_json(c.manifest.at("meta"));
  TrainConfig config;
  const auto& jc = c.manifest.at("config");
  config.learning_rate = jc.value("learning_rate", 0.001);
  config.epochs = jc.value("epochs", std::size_t{100});
  config.batch_size = jc.value("batch_size", std::size_t{32});
  config.seed = jc.value("seed", std::uint64_t{1});
  config.f32 = jc.value("f32", false);

  Model m = build_from_specs(std::move(specs), meta, config);

  std::size_t idx = 0;
  auto assign = [&](std::vector<ParamRef> refs) {
    for (auto& p : refs) {
      if (idx >= c.tensors.size()) throw DataError("model file missing tensors: " + path);
      auto& [name, t] = c.tensors[idx++];
      if (name != p.name || t.shape != p.value->shape)
        throw DataError("model tensor mismatch at " + name + " in " + path);
      *p.value = std::move(t);
    }
  };
  assign(m.params());
  assign(m.state_tensors());
  return m;
}

nlohmann::json load_manifest(const std::string& path) {
  Container c = load_container(path);  // small files; fine to read fully
  return c.manifest;
}

}  // namespace oscope::nn
