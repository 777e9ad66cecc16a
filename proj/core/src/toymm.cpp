#include "morphgan/toymm.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "morphgan/error.hpp"
#include "morphgan/rng.hpp"

namespace morphgan {

namespace {

constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

// Mean and spread of each identity-driven face quantity. The identity
// coefficients are blended into these through a fixed basis.
struct Quantity {
  double mean;
  double sd;
};

constexpr std::array<Quantity, 10> kQuantities{{
    {0.62, 0.06},   // head half-width
    {0.80, 0.06},   // head half-height
    {0.28, 0.045},  // eye half-separation
    {-0.18, 0.045}, // eye height
    {0.095, 0.022}, // eye radius
    {0.22, 0.05},   // nose length
    {0.075, 0.02},  // nose half-width
    {0.42, 0.05},   // mouth height
    {0.26, 0.05},   // mouth half-width
    {0.68, 0.09},   // skin albedo
}};

struct FaceGeometry {
  double head_rx, head_ry;
  double eye_dx, eye_y, eye_r;
  double nose_len, nose_w;
  double mouth_y, mouth_w;
  double skin;
  double smile;
  double eye_open;
};

// Fixed basis entry in [-1, 1]; rows normalised so every quantity receives a
// unit-variance blend of the coefficients.
double basis_raw(std::size_t q, std::size_t k) {
  return 2.0 * hash_to_unit(derive_seed(0x5eedba5eULL, {q, k})) - 1.0;
}

FaceGeometry geometry_of(const MorphParams& p) {
  std::array<double, kQuantities.size()> q{};
  for (std::size_t i = 0; i < kQuantities.size(); ++i) {
    double norm = 0.0, acc = 0.0;
    for (std::size_t k = 0; k < p.identity_coeffs.size(); ++k) {
      const double b = basis_raw(i, k);
      norm += b * b;
      acc += b * p.identity_coeffs[k];
    }
    const double z = norm > 0.0 ? acc / std::sqrt(norm) : 0.0;
    const auto [mean, sd] = kQuantities[i];
    q[i] = std::clamp(mean + sd * z, mean - 3.0 * sd, mean + 3.0 * sd);
  }
  const double e0 = p.expression_coeffs.size() > 0 ? p.expression_coeffs[0] : 0.0;
  const double e1 = p.expression_coeffs.size() > 1 ? p.expression_coeffs[1] : 0.0;
  return FaceGeometry{q[0], q[1], q[2], q[3], q[4], q[5], q[6], q[7], q[8], q[9],
                      std::clamp(0.09 * e0, -0.2, 0.2), std::clamp(1.0 + 0.3 * e1, 0.3, 1.7)};
}

// Logistic edge, ~1 pixel wide. Negative signed distance means inside.
double soft_inside(double signed_dist, double edge) { return 1.0 / (1.0 + std::exp(signed_dist / edge)); }

double ellipse_sdist(double u, double v, double rx, double ry) {
  const double r = std::sqrt((u * u) / (rx * rx) + (v * v) / (ry * ry));
  return (r - 1.0) * std::min(rx, ry);
}

struct PixelLayers {
  double head, eyes, brows, nose, mouth;
};

// Face-space coordinates of pixel (row, col), after undoing roll and shear.
// Integer arithmetic keeps u exactly antisymmetric under mirroring.
std::pair<double, double> face_coords(const MorphParams& p, int row, int col, int size) {
  const double u = static_cast<double>(2 * col + 1 - size) / size;
  const double v = static_cast<double>(2 * row + 1 - size) / size;
  const double c = std::cos(p.roll), s = std::sin(p.roll);
  const double u1 = c * u + s * v;
  const double v1 = -s * u + c * v;
  return {u1 - 0.35 * p.shear * v1, v1};
}

PixelLayers layers_at(const FaceGeometry& g, double u, double v, double edge) {
  PixelLayers L{};
  L.head = soft_inside(ellipse_sdist(u, v, g.head_rx, g.head_ry), edge);
  const double au = std::abs(u);
  L.eyes = soft_inside(ellipse_sdist(au - g.eye_dx, v - g.eye_y, g.eye_r * 1.25, g.eye_r * g.eye_open * 0.75), edge);
  const double brow_y = g.eye_y - 0.12 - 0.03 * (g.eye_open - 1.0);
  L.brows = soft_inside(ellipse_sdist(au - g.eye_dx, v - brow_y, g.eye_r * 1.6, 0.028), edge);
  const double nose_cy = g.eye_y + 0.08 + 0.5 * g.nose_len;
  L.nose = soft_inside(ellipse_sdist(u, v - nose_cy, g.nose_w, 0.5 * g.nose_len), edge);
  const double t = std::min(au / g.mouth_w, 1.5);
  const double curve = g.mouth_y - g.smile * (1.0 - t * t);
  const double across = soft_inside(au - g.mouth_w, edge);
  L.mouth = across * soft_inside(std::abs(v - curve) - 0.035, edge);
  return L;
}

struct Palette {
  std::array<double, 3> background, skin_tint, eye, brow, mouth;
};

constexpr Palette kGray{{0.08, 0.08, 0.08}, {1.0, 1.0, 1.0}, {0.12, 0.12, 0.12}, {0.25, 0.25, 0.25},
                        {0.30, 0.30, 0.30}};
constexpr Palette kColor{{0.08, 0.08, 0.10}, {1.0, 0.84, 0.72}, {0.12, 0.10, 0.10}, {0.25, 0.20, 0.18},
                         {0.50, 0.20, 0.22}};

// Darkening-only directional shading: 1 on the lit half-plane, falling off
// linearly (with strength) on the shadow half-plane.
double light_factor(const MorphParams& p, int row, int col, int size) {
  const double u = static_cast<double>(2 * col + 1 - size) / size;
  const double v = static_cast<double>(2 * row + 1 - size) / size;
  const double d = u * std::cos(p.light_angle) + v * std::sin(p.light_angle);
  return 1.0 - 0.5 * p.light_strength * std::clamp(-d, 0.0, 1.5);
}

std::uint64_t hash_double(std::uint64_t h, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  return mix64(h ^ bits);
}

std::uint64_t nuisance_hash(const MorphParams& p) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(p.identity_label) + 0x7f4a7c15ULL);
  for (double e : p.expression_coeffs) h = hash_double(h, e);
  h = hash_double(h, p.shear);
  h = hash_double(h, p.roll);
  h = hash_double(h, p.light_angle);
  h = hash_double(h, p.light_strength);
  return h;
}

void check_size(int size) {
  if (size < 16) throw ArgumentError("render size must be >= 16, got " + std::to_string(size));
}

}  // namespace

// ---------------------------------------------------------------------------
// MorphParams
// ---------------------------------------------------------------------------

std::vector<double> MorphParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(identity_coeffs.size() + expression_coeffs.size() + 5);
  flat.insert(flat.end(), identity_coeffs.begin(), identity_coeffs.end());
  flat.insert(flat.end(), expression_coeffs.begin(), expression_coeffs.end());
  flat.push_back(shear);
  flat.push_back(roll);
  flat.push_back(light_angle);
  flat.push_back(light_strength);
  flat.push_back(static_cast<double>(identity_label));
  return flat;
}

MorphParams MorphParams::unflatten(const std::vector<double>& flat, int d_id, int d_ex) {
  if (static_cast<int>(flat.size()) != flat_size(d_id, d_ex))
    throw ArgumentError("MorphParams::unflatten: wrong vector length");
  MorphParams p;
  auto it = flat.begin();
  p.identity_coeffs.assign(it, it + d_id);
  it += d_id;
  p.expression_coeffs.assign(it, it + d_ex);
  it += d_ex;
  p.shear = *it++;
  p.roll = *it++;
  p.light_angle = *it++;
  p.light_strength = *it++;
  p.identity_label = static_cast<std::int64_t>(*it);
  return p;
}

// ---------------------------------------------------------------------------
// Sampling and rendering
// ---------------------------------------------------------------------------

std::vector<MorphParams> sample_params(std::uint64_t seed, int num_ids, int per_id, const SamplingOptions& options) {
  if (num_ids < 1 || per_id < 1) throw ArgumentError("sample_params: num_ids and per_id must be >= 1");
  if (options.d_id < 1 || options.d_ex < 0) throw ArgumentError("sample_params: bad coefficient dimensions");
  const auto& nd = options.nuisance;
  std::vector<MorphParams> out;
  out.reserve(static_cast<std::size_t>(num_ids) * per_id);
  for (int id = 0; id < num_ids; ++id) {
    // One stream per identity.
    Engine rng(derive_seed(seed, {static_cast<std::uint64_t>(id)}));
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<double> identity(static_cast<std::size_t>(options.d_id));
    for (auto& c : identity) c = unit(rng);
    for (int k = 0; k < per_id; ++k) {
      MorphParams p;
      p.identity_coeffs = identity;
      p.expression_coeffs.resize(static_cast<std::size_t>(options.d_ex));
      for (auto& e : p.expression_coeffs) e = nd.expression_sd * unit(rng);
      p.shear = std::clamp(nd.shear_sd * unit(rng), -1.0, 1.0);
      p.roll = nd.roll_sd * unit(rng);
      p.light_angle = nd.light_angle_sd * unit(rng);
      p.light_strength = std::clamp(nd.light_strength_mean + nd.light_strength_sd * unit(rng), 0.0, 1.0);
      p.identity_label = options.first_label + id;
      out.push_back(std::move(p));
    }
  }
  return out;
}

Image render_synthetic(const MorphParams& params, int size, int channels) {
  check_size(size);
  if (channels != 1 && channels != 3) throw ArgumentError("render_synthetic: channels must be 1 or 3");
  const FaceGeometry g = geometry_of(params);
  const Palette& pal = channels == 1 ? kGray : kColor;
  const double edge = 1.0 / size;
  Image img(size, size, channels);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const auto [u, v] = face_coords(params, r, c, size);
      const PixelLayers L = layers_at(g, u, v, edge);
      const double shade = light_factor(params, r, c, size);
      for (int ch = 0; ch < channels; ++ch) {
        double skin = g.skin * pal.skin_tint[ch] * (1.0 - 0.22 * L.nose);
        skin += (pal.brow[ch] - skin) * L.brows;
        skin += (pal.eye[ch] - skin) * L.eyes;
        skin += (pal.mouth[ch] - skin) * L.mouth;
        const double value = pal.background[ch] + (skin - pal.background[ch]) * L.head;
        img.at(r, c, ch) = static_cast<float>(std::clamp(value * shade, 0.0, 1.0));
      }
    }
  }
  return img;
}

Image render_face_mask(const MorphParams& params, int size) {
  check_size(size);
  const FaceGeometry g = geometry_of(params);
  const double edge = 1.0 / size;
  Image mask(size, size, 1);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const auto [u, v] = face_coords(params, r, c, size);
      mask.at(r, c) = static_cast<float>(soft_inside(ellipse_sdist(u, v, g.head_rx, g.head_ry), edge));
    }
  return mask;
}

Image realism_transform(const Image& image, const MorphParams& params) {
  const int size = image.height;
  if (image.width != size) throw ArgumentError("realism_transform: image must be square");
  check_size(size);
  const int channels = image.channels;
  const FaceGeometry g = geometry_of(params);
  const double edge = 1.0 / size;
  const std::uint64_t h = nuisance_hash(params);
  const std::uint64_t label_h = mix64(static_cast<std::uint64_t>(params.identity_label) ^ 0xa5a5a5a5ULL);

  const double id0 = params.identity_coeffs.empty() ? 0.0 : params.identity_coeffs[0];
  const double id1 = params.identity_coeffs.size() > 1 ? params.identity_coeffs[1] : id0;
  const double freq_u = 2.5 + 0.6 * id0;
  const double freq_v = 1.5 + 0.6 * id1;
  const double phase = 2.0 * kPi * hash_to_unit(label_h);
  const double bg_offset = 0.08 * (hash_to_unit(h) - 0.5);
  constexpr std::array<double, 3> kBgColor{0.55, 0.50, 0.45};

  Image composed(size, size, channels);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const auto [u, v] = face_coords(params, r, c, size);
      const double m = soft_inside(ellipse_sdist(u, v, g.head_rx, g.head_ry), edge);
      const double texture = 0.035 * std::sin(2.0 * kPi * (freq_u * u + freq_v * v) + phase);
      const std::uint64_t ph = derive_seed(h, {static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(c)});
      const double speckle = 0.02 * (2.0 * hash_to_unit(ph) - 1.0);
      for (int ch = 0; ch < channels; ++ch) {
        const double x = image.at(r, c, ch);
        const double toned = 0.04 + 0.92 * std::pow(std::max(x, 0.0), 0.7);
        const double face = toned + texture + speckle;
        const double bg = (channels == 1 ? 0.5 : kBgColor[ch]) + bg_offset;
        composed.at(r, c, ch) = static_cast<float>(m * face + (1.0 - m) * bg);
      }
    }
  }

  // Separable [1 2 1]/4 blur, clamp-to-edge.
  auto clampi = [size](int i) { return std::clamp(i, 0, size - 1); };
  Image tmp(size, size, channels), out(size, size, channels);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      for (int ch = 0; ch < channels; ++ch)
        tmp.at(r, c, ch) = 0.25F * composed.at(r, clampi(c - 1), ch) + 0.5F * composed.at(r, c, ch) +
                           0.25F * composed.at(r, clampi(c + 1), ch);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      for (int ch = 0; ch < channels; ++ch) {
        const float v = 0.25F * tmp.at(clampi(r - 1), c, ch) + 0.5F * tmp.at(r, c, ch) +
                        0.25F * tmp.at(clampi(r + 1), c, ch);
        out.at(r, c, ch) = std::clamp(v, 0.0F, 1.0F);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

int default_crop_size(int input_size) { return input_size * 96 / 108; }

AugmentParams draw_augment(std::uint64_t seed, int input_size, int crop) {
  if (crop > input_size) throw ArgumentError("augment: crop larger than input");
  if (crop < 1) throw ArgumentError("augment: crop must be positive");
  Engine rng(seed);
  std::uniform_int_distribution<int> off(0, input_size - crop);
  std::uniform_real_distribution<double> ang(-10.0 * kPi / 180.0, 10.0 * kPi / 180.0);
  std::bernoulli_distribution flip(0.5);
  AugmentParams p;
  p.crop = crop;
  p.offset_x = off(rng);
  p.offset_y = off(rng);
  p.angle = ang(rng);
  p.flip = flip(rng);
  return p;
}

AugmentParams center_crop_params(int input_size, int crop) {
  if (crop > input_size) throw ArgumentError("augment: crop larger than input");
  return AugmentParams{crop, (input_size - crop) / 2, (input_size - crop) / 2, 0.0, false};
}

Image apply_augment(const Image& image, const AugmentParams& p) {
  if (p.crop > image.height || p.crop > image.width) throw ArgumentError("augment: crop larger than input");
  Image out(p.crop, p.crop, image.channels);
  const double half = 0.5 * (p.crop - 1);
  const double ca = std::cos(p.angle), sa = std::sin(p.angle);
  auto sample = [&](int y, int x, int ch) -> double {
    if (y < 0 || x < 0 || y >= image.height || x >= image.width) return 0.0;
    return image.at(y, x, ch);
  };
  for (int i = 0; i < p.crop; ++i) {
    for (int j = 0; j < p.crop; ++j) {
      const int jj = p.flip ? p.crop - 1 - j : j;
      const double cx = jj - half, cy = i - half;
      const double sx = ca * cx - sa * cy + p.offset_x + half;
      const double sy = sa * cx + ca * cy + p.offset_y + half;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < image.channels; ++ch) {
        const double v = (1 - fy) * ((1 - fx) * sample(y0, x0, ch) + fx * sample(y0, x0 + 1, ch)) +
                         fy * ((1 - fx) * sample(y0 + 1, x0, ch) + fx * sample(y0 + 1, x0 + 1, ch));
        out.at(i, j, ch) = static_cast<float>(v);
      }
    }
  }
  return out;
}

Image augment(const Image& image, std::uint64_t seed, int crop) {
  if (crop == 0) crop = default_crop_size(image.height);
  return apply_augment(image, draw_augment(seed, image.height, crop));
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

void validate(const DataConfig& config) {
  if (config.image_size < 16 || config.image_size % 2 != 0)
    throw ConfigError("data.image_size must be an even number >= 16");
  if (config.channels != 1 && config.channels != 3) throw ConfigError("data.channels must be 1 or 3");
  if (config.d_id < 1 || config.d_ex < 0) throw ConfigError("data.d_id must be >= 1 and data.d_ex >= 0");
  const std::array<std::pair<const char*, const SubsetSpec*>, 6> subsets{{
      {"synthetic", &config.synthetic},
      {"real", &config.real},
      {"paired", &config.paired},
      {"heldout", &config.heldout},
      {"pretrain", &config.pretrain},
      {"generated", &config.generated},
  }};
  for (const auto& [name, s] : subsets)
    if (s->num_ids < 1 || s->per_id < 1 || s->first_id < 0)
      throw ConfigError(std::string("data.") + name + ": counts must be >= 1 and first_id >= 0");
  for (std::size_t i = 0; i < subsets.size(); ++i)
    for (std::size_t j = i + 1; j < subsets.size(); ++j) {
      const auto& a = *subsets[i].second;
      const auto& b = *subsets[j].second;
      if (a.first_id < b.end_id() && b.first_id < a.end_id())
        throw ConfigError(std::string("identity ranges overlap: data.") + subsets[i].first + " and data." +
                          subsets[j].first);
    }
}

bool DatasetBundle::operator==(const DatasetBundle& o) const {
  auto same_syn = [](const SyntheticSample& a, const SyntheticSample& b) {
    return a.params == b.params && a.image == b.image;
  };
  auto same_real = [](const RealSample& a, const RealSample& b) { return a.label == b.label && a.image == b.image; };
  auto same_pair = [](const RenderedPair& a, const RenderedPair& b) {
    return a.params == b.params && a.synthetic == b.synthetic && a.real == b.real;
  };
  return config == o.config &&
         std::equal(unpaired_synthetic.begin(), unpaired_synthetic.end(), o.unpaired_synthetic.begin(),
                    o.unpaired_synthetic.end(), same_syn) &&
         std::equal(unpaired_real.begin(), unpaired_real.end(), o.unpaired_real.begin(), o.unpaired_real.end(),
                    same_real) &&
         std::equal(paired.begin(), paired.end(), o.paired.begin(), o.paired.end(), same_pair) &&
         std::equal(heldout.begin(), heldout.end(), o.heldout.begin(), o.heldout.end(), same_pair) &&
         std::equal(pretrain_real.begin(), pretrain_real.end(), o.pretrain_real.begin(), o.pretrain_real.end(),
                    same_real);
}

SamplingOptions sampling_options(const DataConfig& config, const SubsetSpec& subset) {
  return SamplingOptions{config.d_id, config.d_ex, subset.first_id, config.nuisance};
}

std::vector<MorphParams> subset_params(const DataConfig& config, const SubsetSpec& subset, std::uint64_t stream) {
  return sample_params(derive_seed(config.seed, {stream}), subset.num_ids, subset.per_id,
                       sampling_options(config, subset));
}

DatasetBundle build_datasets(const DataConfig& config) {
  validate(config);
  DatasetBundle b;
  b.config = config;
  const int size = config.image_size;
  const int ch = config.channels;

  for (auto& p : subset_params(config, config.synthetic, 1)) {
    Image img = render_synthetic(p, size, ch);
    b.unpaired_synthetic.push_back({std::move(p), std::move(img)});
  }
  for (const auto& p : subset_params(config, config.real, 2))
    b.unpaired_real.push_back({p.identity_label, realism_transform(render_synthetic(p, size, ch), p)});
  for (auto& p : subset_params(config, config.paired, 3)) {
    Image syn = render_synthetic(p, size, ch);
    Image real = realism_transform(syn, p);
    b.paired.push_back({std::move(p), std::move(syn), std::move(real)});
  }
  for (auto& p : subset_params(config, config.heldout, 4)) {
    Image syn = render_synthetic(p, size, ch);
    Image real = realism_transform(syn, p);
    b.heldout.push_back({std::move(p), std::move(syn), std::move(real)});
  }
  for (const auto& p : subset_params(config, config.pretrain, 5))
    b.pretrain_real.push_back({p.identity_label, realism_transform(render_synthetic(p, size, ch), p)});
  return b;
}

void check_invariants(const DatasetBundle& b) {
  auto in_range = [](std::int64_t label, const SubsetSpec& s) { return label >= s.first_id && label < s.end_id(); };
  const auto& cfg = b.config;
  for (const auto& s : b.unpaired_synthetic) {
    if (!in_range(s.params.identity_label, cfg.synthetic)) throw DataError("synthetic label outside its range");
    if (in_range(s.params.identity_label, cfg.real)) throw DataError("synthetic/real identity overlap");
  }
  for (const auto& r : b.unpaired_real)
    if (!in_range(r.label, cfg.real)) throw DataError("real label outside its range");
  for (const auto& p : b.paired) {
    if (!in_range(p.params.identity_label, cfg.paired)) throw DataError("paired label outside its range");
    if (!(p.real == realism_transform(p.synthetic, p.params)))
      throw DataError("paired couple is not an exact realism_transform pair");
  }
  for (const auto& p : b.heldout)
    if (!in_range(p.params.identity_label, cfg.heldout)) throw DataError("held-out label outside its range");
  for (const auto& r : b.pretrain_real)
    if (!in_range(r.label, cfg.pretrain)) throw DataError("pretrain label outside its range");
  // Identity coefficients must be shared within an identity.
  std::int64_t prev = -1;
  const std::vector<double>* ref = nullptr;
  for (const auto& s : b.unpaired_synthetic) {
    if (s.params.identity_label != prev) {
      prev = s.params.identity_label;
      ref = &s.params.identity_coeffs;
    } else if (*ref != s.params.identity_coeffs) {
      throw DataError("identity coefficients differ within one identity");
    }
  }
}

std::string fingerprint(const DataConfig& c) {
  std::ostringstream os;
  os.precision(17);
  auto sub = [&os](const SubsetSpec& s) { os << s.first_id << ',' << s.num_ids << ',' << s.per_id << ';'; };
  os << "v1;" << c.seed << ';' << c.image_size << ';' << c.channels << ';' << c.d_id << ';' << c.d_ex << ';';
  sub(c.synthetic);
  sub(c.real);
  sub(c.paired);
  sub(c.heldout);
  sub(c.pretrain);
  sub(c.generated);
  const auto& n = c.nuisance;
  os << n.expression_sd << ',' << n.shear_sd << ',' << n.roll_sd << ',' << n.light_angle_sd << ','
     << n.light_strength_mean << ',' << n.light_strength_sd;
  const std::string text = os.str();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
  return buf;
}

}  // namespace morphgan
