#include "morphgan/nets.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <cmath>
#include <torch/torch.h>

#include "morphgan/error.hpp"
#include "morphgan/rng.hpp"

namespace morphgan {

namespace F = torch::nn::functional;

std::string_view to_string(NetKind kind) {
  switch (kind) {
    case NetKind::generator: return "generator";
    case NetKind::inverse_generator: return "inverse_generator";
    case NetKind::autoencoder_discriminator: return "autoencoder_discriminator";
    case NetKind::embedder: return "embedder";
  }
  return "unknown";
}

NetKind net_kind_from_string(std::string_view name) {
  for (auto k : {NetKind::generator, NetKind::inverse_generator, NetKind::autoencoder_discriminator,
                 NetKind::embedder})
    if (to_string(k) == name) return k;
  throw StructuralError("unknown network kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// WeightSet
// ---------------------------------------------------------------------------

WeightSet::WeightSet(std::vector<Entry> entries, std::uint64_t version)
    : entries_(std::move(entries)), version_(version) {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    for (std::size_t j = i + 1; j < entries_.size(); ++j)
      if (entries_[i].first == entries_[j].first)
        throw StructuralError("WeightSet: duplicate name '" + entries_[i].first + "'");
}

const torch::Tensor& WeightSet::operator[](std::string_view name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw StructuralError("WeightSet: missing tensor '" + std::string(name) + "'");
}

bool WeightSet::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

std::vector<torch::Tensor> WeightSet::tensors() const {
  std::vector<torch::Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::int64_t WeightSet::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

WeightSet WeightSet::with_tensors(std::vector<torch::Tensor> tensors) const {
  if (tensors.size() != entries_.size()) throw StructuralError("WeightSet::with_tensors: count mismatch");
  std::vector<Entry> next;
  next.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!tensors[i].sizes().equals(entries_[i].second.sizes()))
      throw StructuralError("WeightSet::with_tensors: shape mismatch for '" + entries_[i].first + "'");
    next.emplace_back(entries_[i].first, std::move(tensors[i]));
  }
  return WeightSet(std::move(next), version_ + 1);
}

WeightSet WeightSet::with_version(std::uint64_t version) const {
  WeightSet copy = *this;
  copy.version_ = version;
  return copy;
}

WeightSet WeightSet::detached() const {
  std::vector<Entry> next;
  for (const auto& [n, t] : entries_) next.emplace_back(n, t.detach());
  return WeightSet(std::move(next), version_);
}

WeightSet WeightSet::requiring_grad() const {
  std::vector<Entry> next;
  for (const auto& [n, t] : entries_) next.emplace_back(n, t.detach().requires_grad_(true));
  return WeightSet(std::move(next), version_);
}

WeightSet WeightSet::to(torch::ScalarType dtype) const {
  std::vector<Entry> next;
  for (const auto& [n, t] : entries_) next.emplace_back(n, t.detach().to(dtype).clone());
  return WeightSet(std::move(next), version_);
}

bool WeightSet::all_finite() const {
  for (const auto& e : entries_)
    if (!torch::isfinite(e.second).all().item<bool>()) return false;
  return true;
}

bool WeightSet::bitwise_equal(const WeightSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.first != b.first || a.second.scalar_type() != b.second.scalar_type() ||
        !a.second.sizes().equals(b.second.sizes()))
      return false;
    if (!torch::equal(a.second.detach(), b.second.detach())) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Layouts
// ---------------------------------------------------------------------------

namespace {

void add_conv(std::vector<ParamShape>& out, const std::string& name, std::int64_t cout, std::int64_t cin) {
  out.push_back({name + ".w", {cout, cin, 3, 3}});
  out.push_back({name + ".b", {cout}});
}

void add_linear(std::vector<ParamShape>& out, const std::string& name, std::int64_t cout, std::int64_t cin) {
  out.push_back({name + ".w", {cout, cin}});
  out.push_back({name + ".b", {cout}});
}

int strided_size(int n) { return (n + 1) / 2; }  // 3x3, stride 2, pad 1

int embedder_final_side(int n) { return strided_size(strided_size(strided_size(n))); }

}  // namespace

void validate(const NetworkSpec& s) {
  if (s.channels != 1 && s.channels != 3) throw StructuralError("network channels must be 1 or 3");
  if (s.base_channels < 1) throw StructuralError("base_channels must be >= 1");
  if (s.input_size < 2) throw StructuralError("input_size must be >= 2");
  switch (s.kind) {
    case NetKind::generator:
    case NetKind::inverse_generator:
      if (s.input_size % 2 != 0) throw StructuralError("generator input_size must be even");
      if (s.num_residual_blocks < 0) throw StructuralError("num_residual_blocks must be >= 0");
      if (!(s.dropout_keep > 0.0 && s.dropout_keep <= 1.0)) throw StructuralError("dropout_keep must be in (0,1]");
      break;
    case NetKind::autoencoder_discriminator:
      if (s.depth < 1 || s.input_size % (1 << s.depth) != 0)
        throw StructuralError("autoencoder input_size must be divisible by 2^depth");
      if (s.bottleneck < 1) throw StructuralError("bottleneck must be >= 1");
      break;
    case NetKind::embedder:
      if (s.embedding_dim < 1) throw StructuralError("embedding_dim must be >= 1");
      break;
  }
}

std::vector<ParamShape> parameter_layout(const NetworkSpec& s) {
  validate(s);
  std::vector<ParamShape> out;
  const std::int64_t b = s.base_channels, c = s.channels;
  switch (s.kind) {
    case NetKind::generator:
    case NetKind::inverse_generator: {
      add_conv(out, "enc0", b, c);
      add_conv(out, "enc1", 2 * b, b);
      for (int k = 0; k < s.num_residual_blocks; ++k) {
        add_conv(out, "res" + std::to_string(k) + ".a", 2 * b, 2 * b);
        add_conv(out, "res" + std::to_string(k) + ".b", 2 * b, 2 * b);
      }
      add_conv(out, "dec", b, 2 * b);
      add_conv(out, "out", c, b);
      if (s.use_skip) {
        out.push_back({"skip.w", {c}});
        out.push_back({"skip.b", {c}});
      }
      break;
    }
    case NetKind::autoencoder_discriminator: {
      add_conv(out, "e0", b, c);
      for (int l = 1; l <= s.depth; ++l) add_conv(out, "e" + std::to_string(l), b * (l + 1), b * l);
      const std::int64_t side = s.input_size >> s.depth;
      const std::int64_t flat = b * (s.depth + 1) * side * side;
      add_linear(out, "fc_enc", s.bottleneck, flat);
      add_linear(out, "fc_dec", flat, s.bottleneck);
      for (int l = s.depth; l >= 1; --l) add_conv(out, "d" + std::to_string(l), b * l, b * (l + 1));
      add_conv(out, "d_out", c, b);
      break;
    }
    case NetKind::embedder: {
      add_conv(out, "c1", b, c);
      add_conv(out, "c2", 2 * b, b);
      add_conv(out, "c3", 4 * b, 2 * b);
      const std::int64_t side = embedder_final_side(s.input_size);
      add_linear(out, "fc", s.embedding_dim, 4 * b * side * side);
      break;
    }
  }
  return out;
}

WeightSet init_weights(const NetworkSpec& spec, std::uint64_t seed, torch::ScalarType dtype) {
  auto layout = parameter_layout(spec);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  std::vector<WeightSet::Entry> entries;
  for (const auto& p : layout) {
    torch::Tensor t;
    const bool is_bias = p.name.ends_with(".b");
    if (p.name == "skip.w") {
      t = torch::full(p.shape, 4.0, torch::TensorOptions().dtype(torch::kDouble));
    } else if (p.name == "skip.b") {
      t = torch::full(p.shape, -2.0, torch::TensorOptions().dtype(torch::kDouble));
    } else if (is_bias) {
      t = torch::zeros(p.shape, torch::TensorOptions().dtype(torch::kDouble));
    } else {
      std::int64_t fan_in = 1;
      for (std::size_t i = 1; i < p.shape.size(); ++i) fan_in *= p.shape[i];
      double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      // Residual branches and the generator head start small so an untrained
      // generator is dominated by its skip path.
      if (p.name.ends_with(".b.w") || (p.name == "out.w" && spec.use_skip)) bound *= 0.1;
      t = torch::empty(p.shape, torch::TensorOptions().dtype(torch::kDouble)).uniform_(-bound, bound, gen);
    }
    entries.emplace_back(p.name, t.to(dtype));
  }
  return WeightSet(std::move(entries), 0);
}

void check_weights(const NetworkSpec& spec, const WeightSet& weights) {
  const auto layout = parameter_layout(spec);
  if (layout.size() != weights.size())
    throw StructuralError("weight set has " + std::to_string(weights.size()) + " tensors, " +
                          std::string(to_string(spec.kind)) + " spec expects " + std::to_string(layout.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, t] = weights.entries()[i];
    if (name != layout[i].name) throw StructuralError("weight '" + name + "' where '" + layout[i].name + "' expected");
    if (!t.sizes().equals(layout[i].shape)) throw StructuralError("weight '" + name + "' has wrong shape");
  }
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

namespace {

torch::Tensor conv(const torch::Tensor& x, const WeightSet& w, const std::string& name, int stride = 1) {
  return torch::conv2d(x, w[name + ".w"], w[name + ".b"], {stride, stride}, {1, 1});
}

torch::Tensor linear(const torch::Tensor& x, const WeightSet& w, const std::string& name) {
  return torch::linear(x, w[name + ".w"], w[name + ".b"]);
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

void check_input(const NetworkSpec& spec, const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != spec.channels || x.size(2) != spec.input_size || x.size(3) != spec.input_size)
    throw StructuralError(std::string(to_string(spec.kind)) + ": input shape does not match spec (expected N x " +
                          std::to_string(spec.channels) + " x " + std::to_string(spec.input_size) + " x " +
                          std::to_string(spec.input_size) + ")");
}

torch::Tensor dropout_mask_like(const torch::Tensor& h, double keep, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto probs = torch::full(h.sizes(), keep, h.options().requires_grad(false));
  return torch::bernoulli(probs, gen) / keep;
}

}  // namespace

torch::Tensor generator_forward(const NetworkSpec& spec, const WeightSet& w, const torch::Tensor& x, Mode mode,
                                std::uint64_t seed) {
  if (spec.kind != NetKind::generator && spec.kind != NetKind::inverse_generator)
    throw StructuralError("generator_forward: spec is not a generator");
  check_input(spec, x);
  const bool dropout = spec.kind == NetKind::generator && mode == Mode::train && spec.dropout_keep < 1.0;

  auto h0 = torch::relu(conv(x, w, "enc0"));
  auto h = torch::relu(conv(h0, w, "enc1", 2));
  for (int k = 0; k < spec.num_residual_blocks; ++k) {
    const std::string p = "res" + std::to_string(k);
    h = h + conv(torch::relu(conv(h, w, p + ".a")), w, p + ".b");
    if (dropout) h = h * dropout_mask_like(h, spec.dropout_keep, derive_seed(seed, {static_cast<std::uint64_t>(k)}));
  }
  auto u = torch::relu(conv(upsample2(h), w, "dec"));
  if (spec.use_skip) u = u + h0;
  auto pre = conv(u, w, "out");
  if (spec.use_skip) {
    const auto c = spec.channels;
    pre = pre + w["skip.w"].view({1, c, 1, 1}) * x + w["skip.b"].view({1, c, 1, 1});
  }
  return torch::sigmoid(pre);
}

ImageBatch generator_forward(const NetworkSpec& spec, const WeightSet& w, const ImageBatch& x, Mode mode,
                             std::uint64_t seed) {
  return ImageBatch{generator_forward(spec, w, x.pixels, mode, seed),
                    spec.kind == NetKind::generator ? DomainTag::generated : DomainTag::synthetic, x.labels};
}

torch::Tensor autoencode(const NetworkSpec& spec, const WeightSet& w, const torch::Tensor& x) {
  if (spec.kind != NetKind::autoencoder_discriminator) throw StructuralError("autoencode: spec is not an autoencoder");
  check_input(spec, x);
  auto h = torch::elu(conv(x, w, "e0"));
  for (int l = 1; l <= spec.depth; ++l) h = torch::elu(conv(h, w, "e" + std::to_string(l), 2));
  const auto shape = h.sizes().vec();
  auto z = linear(h.flatten(1), w, "fc_enc");
  h = torch::elu(linear(z, w, "fc_dec")).view(shape);
  for (int l = spec.depth; l >= 1; --l) h = torch::elu(conv(upsample2(h), w, "d" + std::to_string(l)));
  return torch::sigmoid(conv(h, w, "d_out"));
}

ImageBatch autoencode(const NetworkSpec& spec, const WeightSet& w, const ImageBatch& x) {
  return ImageBatch{autoencode(spec, w, x.pixels), x.tag, x.labels};
}

torch::Tensor embed(const NetworkSpec& spec, const WeightSet& w, const torch::Tensor& x) {
  if (spec.kind != NetKind::embedder) throw StructuralError("embed: spec is not an embedder");
  check_input(spec, x);
  auto h = torch::relu(conv(x, w, "c1", 2));
  h = torch::relu(conv(h, w, "c2", 2));
  h = torch::relu(conv(h, w, "c3", 2));
  auto e = linear(h.flatten(1), w, "fc");
  return e / e.norm(2, {1}, true).clamp_min(1e-12);
}

torch::Tensor augment_batch(const torch::Tensor& x, std::span<const AugmentParams> params) {
  if (x.dim() != 4 || static_cast<std::size_t>(x.size(0)) != params.size())
    throw StructuralError("augment_batch: need one AugmentParams per image");
  const auto n = x.size(0);
  const auto H = x.size(2), W = x.size(3);
  const int crop = params.empty() ? 0 : params.front().crop;
  if (crop > H || crop > W) throw ArgumentError("augment: crop larger than input");
  auto grid = torch::empty({n, crop, crop, 2}, torch::TensorOptions().dtype(torch::kDouble));
  auto g = grid.accessor<double, 4>();
  for (std::int64_t k = 0; k < n; ++k) {
    const auto& p = params[static_cast<std::size_t>(k)];
    if (p.crop != crop) throw ArgumentError("augment_batch: mixed crop sizes");
    const double half = 0.5 * (crop - 1);
    const double ca = std::cos(p.angle), sa = std::sin(p.angle);
    for (int i = 0; i < crop; ++i)
      for (int j = 0; j < crop; ++j) {
        const int jj = p.flip ? crop - 1 - j : j;
        const double cx = jj - half, cy = i - half;
        const double sx = ca * cx - sa * cy + p.offset_x + half;
        const double sy = sa * cx + ca * cy + p.offset_y + half;
        g[k][i][j][0] = 2.0 * sx / static_cast<double>(W - 1) - 1.0;
        g[k][i][j][1] = 2.0 * sy / static_cast<double>(H - 1) - 1.0;
      }
  }
  return torch::grid_sampler(x, grid.to(x.scalar_type()), /*bilinear*/ 0, /*zeros*/ 0, /*align_corners*/ true);
}

torch::Tensor center_crop(const torch::Tensor& x, int crop) {
  const auto H = x.size(2), W = x.size(3);
  if (crop > H || crop > W) throw ArgumentError("center_crop: crop larger than input");
  const auto oy = (H - crop) / 2, ox = (W - crop) / 2;
  return x.narrow(2, oy, crop).narrow(3, ox, crop);
}

}  // namespace morphgan
