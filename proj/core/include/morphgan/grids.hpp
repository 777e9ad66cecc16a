#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "morphgan/image.hpp"
#include "morphgan/nets.hpp"
#include "morphgan/toymm.hpp"

namespace morphgan {

/// 8-bit PNG (gray or RGB), values clamped to [0, 1].
void write_png(const std::filesystem::path& path, const Image& image);

/// Row-major tiling with `pad` pixels of `pad_value` between tiles.
/// All tiles must share one shape.
Image tile_images(std::span<const Image> tiles, int cols, int pad = 0, float pad_value = 1.0F);

/// rows x cols tiling written as PNG. Throws ArgumentError unless
/// rows * cols == images.size().
Image emit_grid(std::span<const Image> images, int rows, int cols, const std::filesystem::path& path);

/// Two rows: the synthetic inputs and their translations.
Image translation_grid(const NetworkSpec& spec, const WeightSet& generator, std::span<const Image> inputs);

/// `from` with identity coefficients (1 - t) * from + t * to.
MorphParams interpolate_identity(const MorphParams& from, const MorphParams& to, double t);

/// Parameters of the interpolation grid, row-major: row r blends identity
/// with t = r / (steps - 1), column c sets shear to an even spacing of
/// [-pose_range, pose_range].
std::vector<MorphParams> interpolation_params(const MorphParams& from, const MorphParams& to, int steps, int cols,
                                              double pose_range);

Image interpolation_grid(const NetworkSpec& spec, const WeightSet& generator, const MorphParams& from,
                         const MorphParams& to, int steps, int cols, double pose_range = 0.8);

/// Synthetic row and translated row for light strength 0 .. 1.
Image illumination_strip(const NetworkSpec& spec, const WeightSet& generator, const MorphParams& base, int steps);

}  // namespace morphgan
