#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "morphgan/array_io.hpp"
#include "morphgan/rng.hpp"
#include "morphgan/trainer.hpp"

namespace morphgan {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'M', 'G', 'C', 'K', 'P', 'T', '\0', '\0'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IntegrityError("checkpoint: truncated");
  return v;
}

Array to_array(const torch::Tensor& t) {
  const auto c = t.detach().contiguous();
  std::vector<std::int64_t> shape(c.sizes().begin(), c.sizes().end());
  switch (c.scalar_type()) {
    case torch::kFloat:
      return Array::from_f32(shape, {c.data_ptr<float>(), static_cast<std::size_t>(c.numel())});
    case torch::kDouble:
      return Array::from_f64(shape, {c.data_ptr<double>(), static_cast<std::size_t>(c.numel())});
    case torch::kLong:
      return Array::from_i64(shape, {c.data_ptr<std::int64_t>(), static_cast<std::size_t>(c.numel())});
    default:
      throw ArgumentError("checkpoint: unsupported tensor dtype");
  }
}

torch::Tensor to_tensor(const Array& a) {
  torch::ScalarType st = torch::kFloat;
  switch (a.dtype) {
    case DType::f32: st = torch::kFloat; break;
    case DType::f64: st = torch::kDouble; break;
    case DType::i64: st = torch::kLong; break;
  }
  auto t = torch::empty(a.shape, torch::TensorOptions().dtype(st));
  if (static_cast<std::size_t>(t.nbytes()) != a.bytes.size()) throw IntegrityError("checkpoint: array size mismatch");
  std::memcpy(t.data_ptr(), a.bytes.data(), a.bytes.size());
  return t;
}

using Entries = std::map<std::string, Array>;

void write_archive(const fs::path& path, const json& manifest, const Entries& entries) {
  std::ostringstream body(std::ios::binary);
  body.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(body, kCheckpointVersion);
  const auto text = manifest.dump();
  put<std::uint64_t>(body, text.size());
  body.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint32_t>(body, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, array] : entries) {
    put<std::uint32_t>(body, static_cast<std::uint32_t>(name.size()));
    body.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_array(body, array);
  }
  const auto bytes = body.str();
  const auto sum = fnv1a(bytes.data(), bytes.size());

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    put<std::uint64_t>(out, sum);
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::pair<json, Entries> read_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 4 + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IntegrityError("checkpoint: bad magic in " + path.string());
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  if (version != kCheckpointVersion)
    throw IncompatibleVersionError("checkpoint: format version " + std::to_string(version) + ", expected " +
                                   std::to_string(kCheckpointVersion));
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (fnv1a(bytes.data(), bytes.size() - 8) != stored) throw IntegrityError("checkpoint: checksum mismatch");

  std::istringstream is(bytes.substr(sizeof(kMagic) + 4, bytes.size() - sizeof(kMagic) - 4 - 8), std::ios::binary);
  const auto len = get<std::uint64_t>(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw IntegrityError("checkpoint: truncated");
  json manifest = json::parse(text);
  Entries entries;
  const auto n = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_len = get<std::uint32_t>(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw IntegrityError("checkpoint: truncated");
    entries.emplace(std::move(name), read_array(is));
  }
  return {std::move(manifest), std::move(entries)};
}

const Array& entry(const Entries& e, const std::string& name) {
  auto it = e.find(name);
  if (it == e.end()) throw IntegrityError("checkpoint: missing entry " + name);
  return it->second;
}

void put_weights(Entries& e, json& m, const std::string& key, const WeightSet& w) {
  json names = json::array();
  for (const auto& [name, t] : w.entries()) {
    names.push_back(name);
    e.emplace(key + "/" + name, to_array(t));
  }
  m["weight_sets"][key] = {{"names", names}, {"version", w.version()}};
}

WeightSet get_weights(const Entries& e, const json& m, const std::string& key) {
  const auto& info = m.at("weight_sets").at(key);
  std::vector<WeightSet::Entry> out;
  for (const auto& name : info.at("names")) {
    const auto n = name.get<std::string>();
    out.emplace_back(n, to_tensor(entry(e, key + "/" + n)));
  }
  return WeightSet(std::move(out), info.at("version").get<std::uint64_t>());
}

void put_adam(Entries& e, json& m, const std::string& key, const AdamState& s) {
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    e.emplace(key + "/m/" + std::to_string(i), to_array(s.m[i]));
    e.emplace(key + "/v/" + std::to_string(i), to_array(s.v[i]));
  }
  m["adam"][key] = {{"step", s.step}, {"count", s.m.size()}};
}

AdamState get_adam(const Entries& e, const json& m, const std::string& key) {
  const auto& info = m.at("adam").at(key);
  AdamState s;
  s.step = info.at("step").get<std::int64_t>();
  const auto n = info.at("count").get<std::size_t>();
  for (std::size_t i = 0; i < n; ++i) {
    s.m.push_back(to_tensor(entry(e, key + "/m/" + std::to_string(i))));
    s.v.push_back(to_tensor(entry(e, key + "/v/" + std::to_string(i))));
  }
  return s;
}

}  // namespace

void checkpoint_save(const TrainState& state, const TrainConfig& config, const fs::path& path) {
  json m;
  m["format"] = "morphgan-checkpoint";
  m["version"] = kCheckpointVersion;
  m["iteration"] = state.iteration;
  m["config"] = config;
  const auto& eq = state.equilibrium;
  m["equilibrium"] = {{"k_dr", eq.k_dr}, {"k_ds", eq.k_ds}, {"k_dp", eq.k_dp}, {"rate", eq.rate}, {"gamma", eq.gamma}};
  m["centroids"] = {{"dim", state.centroids.dim()},
                    {"beta", state.centroids.beta()},
                    {"beta_as_retention", state.centroids.beta_as_retention()}};

  Entries e;
  put_weights(e, m, "g", state.g);
  put_weights(e, m, "g_inv", state.g_inv);
  put_weights(e, m, "d_real", state.d_real);
  put_weights(e, m, "d_syn", state.d_syn);
  put_weights(e, m, "embedder", state.embedder);
  put_weights(e, m, "ema_g", state.ema_g);
  put_weights(e, m, "ema_g_inv", state.ema_g_inv);
  put_adam(e, m, "opt_g", state.opt_g);
  put_adam(e, m, "opt_g_inv", state.opt_g_inv);
  put_adam(e, m, "opt_d_real", state.opt_d_real);
  put_adam(e, m, "opt_d_syn", state.opt_d_syn);

  std::vector<std::int64_t> labels, init;
  std::vector<double> values;
  for (const auto& [label, entry] : state.centroids.entries()) {
    labels.push_back(label);
    init.push_back(entry.initialized ? 1 : 0);
    values.insert(values.end(), entry.centroid.begin(), entry.centroid.end());
  }
  const auto k = static_cast<std::int64_t>(labels.size());
  e.emplace("centroids/labels", Array::from_i64({k}, labels));
  e.emplace("centroids/initialized", Array::from_i64({k}, init));
  e.emplace("centroids/values", Array::from_f64({k, state.centroids.dim()}, values));
  write_archive(path, m, e);
}

TrainState checkpoint_load(const fs::path& path, TrainConfig* config_out) {
  const auto [m, e] = read_archive(path);
  if (m.value("format", "") != "morphgan-checkpoint") throw IntegrityError("checkpoint: not a training checkpoint");
  TrainState s;
  try {
    s.iteration = m.at("iteration").get<std::int64_t>();
    const auto& eq = m.at("equilibrium");
    s.equilibrium.k_dr = eq.at("k_dr").get<double>();
    s.equilibrium.k_ds = eq.at("k_ds").get<double>();
    s.equilibrium.k_dp = eq.at("k_dp").get<double>();
    s.equilibrium.rate = eq.at("rate").get<double>();
    s.equilibrium.gamma = eq.at("gamma").get<double>();
    s.g = get_weights(e, m, "g");
    s.g_inv = get_weights(e, m, "g_inv");
    s.d_real = get_weights(e, m, "d_real");
    s.d_syn = get_weights(e, m, "d_syn");
    s.embedder = get_weights(e, m, "embedder");
    s.ema_g = get_weights(e, m, "ema_g");
    s.ema_g_inv = get_weights(e, m, "ema_g_inv");
    s.opt_g = get_adam(e, m, "opt_g");
    s.opt_g_inv = get_adam(e, m, "opt_g_inv");
    s.opt_d_real = get_adam(e, m, "opt_d_real");
    s.opt_d_syn = get_adam(e, m, "opt_d_syn");

    const auto& c = m.at("centroids");
    s.centroids = CentroidStore(c.at("dim").get<int>(), c.at("beta").get<double>(), c.at("beta_as_retention").get<bool>());
    const auto labels = entry(e, "centroids/labels").view<std::int64_t>();
    const auto init = entry(e, "centroids/initialized").view<std::int64_t>();
    const auto values = entry(e, "centroids/values").view<double>();
    const auto dim = static_cast<std::size_t>(s.centroids.dim());
    if (values.size() != labels.size() * dim || init.size() != labels.size())
      throw IntegrityError("checkpoint: centroid arrays disagree");
    s.centroids.register_labels(labels);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto& ent = s.centroids.entries().at(labels[i]);
      ent.initialized = init[i] != 0;
      std::copy(values.begin() + static_cast<long>(i * dim), values.begin() + static_cast<long>((i + 1) * dim),
                ent.centroid.begin());
    }
    if (config_out != nullptr) {
      TrainConfig cfg;
      from_json(m.at("config"), cfg);
      *config_out = cfg;
    }
  } catch (const json::exception& ex) {
    throw IntegrityError(std::string("checkpoint: malformed manifest: ") + ex.what());
  }
  return s;
}

void save_weights(const WeightSet& weights, const NetworkSpec& spec, const fs::path& path) {
  check_weights(spec, weights);
  json m;
  m["format"] = "morphgan-weights";
  m["version"] = kCheckpointVersion;
  m["spec"] = spec;
  Entries e;
  put_weights(e, m, "weights", weights);
  write_archive(path, m, e);
}

WeightSet load_weights(const fs::path& path, NetworkSpec* spec_out) {
  const auto [m, e] = read_archive(path);
  if (m.value("format", "") != "morphgan-weights") throw IntegrityError("weights: not a weight archive");
  try {
    NetworkSpec spec;
    from_json(m.at("spec"), spec);
    auto w = get_weights(e, m, "weights");
    check_weights(spec, w);
    if (spec_out != nullptr) *spec_out = spec;
    return w;
  } catch (const json::exception& ex) {
    throw IntegrityError(std::string("weights: malformed manifest: ") + ex.what());
  }
}

}  // namespace morphgan
