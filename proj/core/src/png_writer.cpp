#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <png.h>

#include "morphgan/error.hpp"
#include "morphgan/grids.hpp"

namespace morphgan {

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ArgumentError("write_png: channels must be 1 or 3");
  if (image.height < 1 || image.width < 1) throw ArgumentError("write_png: empty image");
  std::vector<std::uint8_t> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0F, 1.0F) * 255.0F));
  });
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr) == 0) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw Error("write_png: " + msg);
  }
}

}  // namespace morphgan
