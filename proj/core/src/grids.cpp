#include "morphgan/grids.hpp"

#include "morphgan/error.hpp"
#include "morphgan/eval.hpp"

namespace morphgan {

Image tile_images(std::span<const Image> tiles, int cols, int pad, float pad_value) {
  if (tiles.empty() || cols < 1 || pad < 0) throw ArgumentError("tile_images: empty input or bad layout");
  const auto& first = tiles.front();
  for (const auto& t : tiles)
    if (t.height != first.height || t.width != first.width || t.channels != first.channels)
      throw ArgumentError("tile_images: tiles differ in shape");
  const int n = static_cast<int>(tiles.size());
  const int rows = (n + cols - 1) / cols;
  Image out(rows * first.height + (rows - 1) * pad, cols * first.width + (cols - 1) * pad, first.channels, pad_value);
  for (int k = 0; k < n; ++k) {
    const int oy = (k / cols) * (first.height + pad);
    const int ox = (k % cols) * (first.width + pad);
    const auto& t = tiles[static_cast<std::size_t>(k)];
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x)
        for (int c = 0; c < t.channels; ++c) out.at(oy + y, ox + x, c) = t.at(y, x, c);
  }
  return out;
}

Image emit_grid(std::span<const Image> images, int rows, int cols, const std::filesystem::path& path) {
  if (rows < 1 || cols < 1 || static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != images.size())
    throw ArgumentError("emit_grid: " + std::to_string(rows) + "x" + std::to_string(cols) + " layout for " +
                        std::to_string(images.size()) + " images");
  auto grid = tile_images(images, cols);
  write_png(path, grid);
  return grid;
}

Image translation_grid(const NetworkSpec& spec, const WeightSet& generator, std::span<const Image> inputs) {
  auto tiles = std::vector<Image>(inputs.begin(), inputs.end());
  const auto out = translate_images(spec, generator, inputs);
  tiles.insert(tiles.end(), out.begin(), out.end());
  return tile_images(tiles, static_cast<int>(inputs.size()));
}

MorphParams interpolate_identity(const MorphParams& from, const MorphParams& to, double t) {
  if (from.identity_coeffs.size() != to.identity_coeffs.size())
    throw ArgumentError("interpolate_identity: coefficient lengths differ");
  MorphParams p = from;
  for (std::size_t i = 0; i < p.identity_coeffs.size(); ++i)
    p.identity_coeffs[i] = (1.0 - t) * from.identity_coeffs[i] + t * to.identity_coeffs[i];
  return p;
}

std::vector<MorphParams> interpolation_params(const MorphParams& from, const MorphParams& to, int steps, int cols,
                                              double pose_range) {
  if (steps < 2 || cols < 1) throw ArgumentError("interpolation_params: need steps >= 2 and cols >= 1");
  std::vector<MorphParams> out;
  for (int r = 0; r < steps; ++r) {
    const auto row = interpolate_identity(from, to, static_cast<double>(r) / (steps - 1));
    for (int c = 0; c < cols; ++c) {
      auto p = row;
      p.shear = cols == 1 ? 0.0 : -pose_range + 2.0 * pose_range * c / (cols - 1);
      out.push_back(p);
    }
  }
  return out;
}

Image interpolation_grid(const NetworkSpec& spec, const WeightSet& generator, const MorphParams& from,
                         const MorphParams& to, int steps, int cols, double pose_range) {
  std::vector<Image> renders;
  for (const auto& p : interpolation_params(from, to, steps, cols, pose_range))
    renders.push_back(render_synthetic(p, spec.input_size, spec.channels));
  return tile_images(translate_images(spec, generator, renders), cols);
}

Image illumination_strip(const NetworkSpec& spec, const WeightSet& generator, const MorphParams& base, int steps) {
  if (steps < 2) throw ArgumentError("illumination_strip: need steps >= 2");
  std::vector<Image> renders;
  for (int i = 0; i < steps; ++i) {
    auto p = base;
    p.light_strength = static_cast<double>(i) / (steps - 1);
    renders.push_back(render_synthetic(p, spec.input_size, spec.channels));
  }
  return translation_grid(spec, generator, renders);
}

}  // namespace morphgan
