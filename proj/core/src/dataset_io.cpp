#include "morphgan/dataset_io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "morphgan/array_io.hpp"
#include "morphgan/config.hpp"
#include "morphgan/error.hpp"

namespace morphgan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Array pack_images(const std::vector<const Image*>& images, int size, int channels) {
  std::vector<float> flat;
  flat.reserve(images.size() * static_cast<std::size_t>(size * size * channels));
  for (const auto* img : images) flat.insert(flat.end(), img->data.begin(), img->data.end());
  return Array::from_f32({static_cast<std::int64_t>(images.size()), size, size, channels}, flat);
}

Array pack_params(const std::vector<const MorphParams*>& params, int d_id, int d_ex) {
  std::vector<double> flat;
  for (const auto* p : params) {
    auto f = p->flatten();
    flat.insert(flat.end(), f.begin(), f.end());
  }
  return Array::from_f64({static_cast<std::int64_t>(params.size()), MorphParams::flat_size(d_id, d_ex)}, flat);
}

Array pack_labels(const std::vector<std::int64_t>& labels) {
  return Array::from_i64({static_cast<std::int64_t>(labels.size())}, labels);
}

std::vector<Image> unpack_images(const Array& a, std::int64_t n, int size, int channels) {
  if (a.dtype != DType::f32 || a.shape != std::vector<std::int64_t>{n, size, size, channels})
    throw IntegrityError("dataset: image array has unexpected shape");
  std::vector<Image> out;
  const auto v = a.view<float>();
  const std::size_t stride = static_cast<std::size_t>(size) * size * channels;
  for (std::int64_t i = 0; i < n; ++i) {
    Image img(size, size, channels);
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * stride), stride, img.data.begin());
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<MorphParams> unpack_params(const Array& a, std::int64_t n, int d_id, int d_ex) {
  const int p = MorphParams::flat_size(d_id, d_ex);
  if (a.dtype != DType::f64 || a.shape != std::vector<std::int64_t>{n, p})
    throw IntegrityError("dataset: params array has unexpected shape");
  const auto v = a.view<double>();
  std::vector<MorphParams> out;
  for (std::int64_t i = 0; i < n; ++i)
    out.push_back(MorphParams::unflatten(std::vector<double>(v.begin() + i * p, v.begin() + (i + 1) * p), d_id, d_ex));
  return out;
}

std::vector<std::int64_t> unpack_labels(const Array& a, std::int64_t n) {
  if (a.dtype != DType::i64 || a.shape != std::vector<std::int64_t>{n})
    throw IntegrityError("dataset: label array has unexpected shape");
  const auto v = a.view<std::int64_t>();
  return {v.begin(), v.end()};
}

json file_entry(const Array& a, const char* layout) {
  return json{{"dtype", dtype_name(a.dtype)}, {"shape", a.shape}, {"layout", layout}};
}

json read_manifest(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IntegrityError("dataset: missing manifest.json in " + dir.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("dataset: unreadable manifest: ") + e.what());
  }
}

}  // namespace

void save_dataset(const DatasetBundle& b, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& c = b.config;
  const int size = c.image_size, ch = c.channels;
  json files = json::object();
  auto put = [&](const std::string& name, const Array& a, const char* layout) {
    save_array(dir / (name + ".bin"), a);
    files[name] = file_entry(a, layout);
  };

  {
    std::vector<const Image*> imgs;
    std::vector<const MorphParams*> params;
    for (const auto& s : b.unpaired_synthetic) {
      imgs.push_back(&s.image);
      params.push_back(&s.params);
    }
    put("synthetic_images", pack_images(imgs, size, ch), "N,H,W,C");
    put("synthetic_params", pack_params(params, c.d_id, c.d_ex), "N,P");
  }
  auto put_real = [&](const std::string& prefix, const std::vector<RealSample>& v) {
    std::vector<const Image*> imgs;
    std::vector<std::int64_t> labels;
    for (const auto& r : v) {
      imgs.push_back(&r.image);
      labels.push_back(r.label);
    }
    put(prefix + "_images", pack_images(imgs, size, ch), "N,H,W,C");
    put(prefix + "_labels", pack_labels(labels), "N");
  };
  put_real("real", b.unpaired_real);
  put_real("pretrain", b.pretrain_real);
  auto put_pairs = [&](const std::string& prefix, const std::vector<RenderedPair>& v) {
    std::vector<const Image*> syn, real;
    std::vector<const MorphParams*> params;
    for (const auto& p : v) {
      syn.push_back(&p.synthetic);
      real.push_back(&p.real);
      params.push_back(&p.params);
    }
    put(prefix + "_synthetic", pack_images(syn, size, ch), "N,H,W,C");
    put(prefix + "_real", pack_images(real, size, ch), "N,H,W,C");
    put(prefix + "_params", pack_params(params, c.d_id, c.d_ex), "N,P");
  };
  put_pairs("paired", b.paired);
  put_pairs("heldout", b.heldout);

  json manifest{
      {"format", "morphgan-dataset"},
      {"version", kDatasetFormatVersion},
      {"fingerprint", fingerprint(c)},
      {"config", c},
      {"counts",
       {{"unpaired_synthetic", b.unpaired_synthetic.size()},
        {"unpaired_real", b.unpaired_real.size()},
        {"paired", b.paired.size()},
        {"heldout", b.heldout.size()},
        {"pretrain_real", b.pretrain_real.size()}}},
      {"array_layout",
       "magic 'MGAR', u32 version=1, u8 dtype (1=f32,2=f64,3=i64), 3 pad bytes, u32 rank, u64 dims[rank], "
       "little-endian row-major payload"},
      {"params_layout", "identity_coeffs[d_id], expression_coeffs[d_ex], shear, roll, light_angle, "
                        "light_strength, identity_label"},
      {"files", files},
  };
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  os << manifest.dump(2) << '\n';
  if (!os) throw Error("dataset: failed to write manifest in " + dir.string());
}

DatasetBundle load_dataset(const fs::path& dir) {
  const json m = read_manifest(dir);
  if (m.value("format", "") != "morphgan-dataset") throw IntegrityError("dataset: not a morphgan dataset");
  if (m.value("version", -1) != kDatasetFormatVersion)
    throw IncompatibleVersionError("dataset: manifest version " + m.value("version", json()).dump() +
                                   " is not supported");
  DatasetBundle b;
  b.config = m.at("config").get<DataConfig>();
  const auto& c = b.config;
  const int size = c.image_size, ch = c.channels;
  const auto& counts = m.at("counts");
  auto count = [&](const char* k) { return counts.at(k).get<std::int64_t>(); };
  auto load = [&](const std::string& name) { return load_array(dir / (name + ".bin")); };

  {
    const auto n = count("unpaired_synthetic");
    auto imgs = unpack_images(load("synthetic_images"), n, size, ch);
    auto params = unpack_params(load("synthetic_params"), n, c.d_id, c.d_ex);
    for (std::int64_t i = 0; i < n; ++i)
      b.unpaired_synthetic.push_back({std::move(params[static_cast<std::size_t>(i)]), std::move(imgs[static_cast<std::size_t>(i)])});
  }
  auto load_real = [&](const std::string& prefix, std::int64_t n, std::vector<RealSample>& out) {
    auto imgs = unpack_images(load(prefix + "_images"), n, size, ch);
    auto labels = unpack_labels(load(prefix + "_labels"), n);
    for (std::int64_t i = 0; i < n; ++i)
      out.push_back({labels[static_cast<std::size_t>(i)], std::move(imgs[static_cast<std::size_t>(i)])});
  };
  load_real("real", count("unpaired_real"), b.unpaired_real);
  load_real("pretrain", count("pretrain_real"), b.pretrain_real);
  auto load_pairs = [&](const std::string& prefix, std::int64_t n, std::vector<RenderedPair>& out) {
    auto syn = unpack_images(load(prefix + "_synthetic"), n, size, ch);
    auto real = unpack_images(load(prefix + "_real"), n, size, ch);
    auto params = unpack_params(load(prefix + "_params"), n, c.d_id, c.d_ex);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
      out.push_back({std::move(params[i]), std::move(syn[i]), std::move(real[i])});
  };
  load_pairs("paired", count("paired"), b.paired);
  load_pairs("heldout", count("heldout"), b.heldout);
  return b;
}

bool dataset_matches(const fs::path& dir, const DataConfig& config) {
  if (!fs::exists(dir / "manifest.json")) return false;
  try {
    const json m = read_manifest(dir);
    return m.value("version", -1) == kDatasetFormatVersion && m.value("fingerprint", "") == fingerprint(config);
  } catch (const Error&) {
    return false;
  }
}

}  // namespace morphgan
