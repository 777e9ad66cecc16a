#include "morphgan/image.hpp"

#include <cmath>
#include <torch/torch.h>

#include "morphgan/error.hpp"

namespace morphgan {

Image::Image(int h, int w, int c, float fill)
    : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

Image mirror_horizontal(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

double mean_abs_diff(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw ArgumentError("mean_abs_diff: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(double(a.data[i]) - double(b.data[i]));
  return a.data.empty() ? 0.0 : acc / static_cast<double>(a.data.size());
}

std::string_view to_string(DomainTag tag) {
  switch (tag) {
    case DomainTag::synthetic: return "synthetic";
    case DomainTag::generated: return "generated";
    case DomainTag::real: return "real";
  }
  return "unknown";
}

void validate(const ImageBatch& batch) {
  const auto& p = batch.pixels;
  if (!p.defined() || p.dim() != 4) throw ArgumentError("ImageBatch: pixels must be rank 4");
  if (p.size(2) != p.size(3)) throw ArgumentError("ImageBatch: images must be square");
  if (p.size(1) != 1 && p.size(1) != 3) throw ArgumentError("ImageBatch: channels must be 1 or 3");
  if (static_cast<std::int64_t>(batch.labels.size()) != p.size(0))
    throw ArgumentError("ImageBatch: labels length must equal batch size");
  if (p.numel() > 0) {
    auto lo = p.min().item<double>();
    auto hi = p.max().item<double>();
    if (!(lo >= 0.0 && hi <= 1.0)) throw ArgumentError("ImageBatch: pixel values must lie in [0,1]");
  }
}

namespace {

void copy_hwc_to_chw(const Image& img, float* dst) {
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        dst[c * plane + static_cast<std::size_t>(y) * img.width + x] = img.at(y, x, c);
}

}  // namespace

torch::Tensor to_tensor(std::span<const Image* const> images) {
  if (images.empty()) throw ArgumentError("to_tensor: empty image list");
  const auto& f = *images.front();
  auto out = torch::empty({static_cast<std::int64_t>(images.size()), f.channels, f.height, f.width});
  float* dst = out.data_ptr<float>();
  const std::size_t stride = f.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = *images[i];
    if (img.height != f.height || img.width != f.width || img.channels != f.channels)
      throw ArgumentError("to_tensor: images differ in shape");
    copy_hwc_to_chw(img, dst + i * stride);
  }
  return out;
}

torch::Tensor to_tensor(std::span<const Image> images) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return to_tensor(std::span<const Image* const>(ptrs));
}

Image image_from_tensor(const torch::Tensor& chw) {
  if (chw.dim() != 3) throw ArgumentError("image_from_tensor: expected CHW tensor");
  auto t = chw.detach().to(torch::kFloat).contiguous();
  const int c = static_cast<int>(t.size(0)), h = static_cast<int>(t.size(1)), w = static_cast<int>(t.size(2));
  Image img(h, w, c);
  const float* src = t.data_ptr<float>();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(y, x, ch) = src[(static_cast<std::size_t>(ch) * h + y) * w + x];
  return img;
}

std::vector<Image> images_from_tensor(const torch::Tensor& nchw) {
  if (nchw.dim() != 4) throw ArgumentError("images_from_tensor: expected NCHW tensor");
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(nchw.size(0)));
  for (std::int64_t i = 0; i < nchw.size(0); ++i) out.push_back(image_from_tensor(nchw[i]));
  return out;
}

}  // namespace morphgan
