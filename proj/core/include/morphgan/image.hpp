#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <torch/types.h>

namespace morphgan {

/// A single image, row-major HWC, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0F);

  float& at(int y, int x, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }

  bool operator==(const Image&) const = default;
};

Image mirror_horizontal(const Image& img);
double mean_abs_diff(const Image& a, const Image& b);

enum class DomainTag { synthetic, generated, real };

std::string_view to_string(DomainTag tag);

/// A batch of images plus domain tag and per-image identity labels.
/// Pixels are held NCHW for the network code; persisted files use NHWC.
struct ImageBatch {
  torch::Tensor pixels;
  DomainTag tag = DomainTag::synthetic;
  std::vector<std::int64_t> labels;

  std::int64_t size() const { return pixels.defined() ? pixels.size(0) : 0; }
};

/// Throws ArgumentError when the batch violates its invariants
/// (rank 4, square, 1 or 3 channels, values in [0,1], labels length).
void validate(const ImageBatch& batch);

/// Stack images into an NCHW float tensor.
torch::Tensor to_tensor(std::span<const Image> images);
torch::Tensor to_tensor(std::span<const Image* const> images);
Image image_from_tensor(const torch::Tensor& chw);
std::vector<Image> images_from_tensor(const torch::Tensor& nchw);

}  // namespace morphgan
