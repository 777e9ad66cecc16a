#include <set>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "morphgan/error.hpp"
#include "morphgan/image.hpp"
#include "morphgan/rng.hpp"

namespace morphgan {
namespace {

TEST(Rng, DeriveSeedIsDeterministicAndTagSensitive) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
  EXPECT_EQ(derive_seed(5, "init/g"), derive_seed(5, "init/g"));
  EXPECT_NE(derive_seed(5, "init/g"), derive_seed(5, "init/g_inv"));
}

TEST(Rng, DerivedSeedsDoNotCollideOverIterations) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(1, {0x7374, i}));
  EXPECT_EQ(seen.size(), 10000U);
}

TEST(Rng, HashToUnitStaysInHalfOpenInterval) {
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = hash_to_unit(mix64(i));
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, Fnv1aKnownValue) {
  // Published FNV-1a 64 test vector for "a".
  EXPECT_EQ(fnv1a("a", 1), 0xaf63dc4c8601ec8cULL);
}

Image ramp(int h, int w, int c) {
  Image img(h, w, c);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<float>(i) / static_cast<float>(img.size());
  return img;
}

TEST(Image, MirrorIsAnInvolution) {
  const auto img = ramp(5, 7, 3);
  EXPECT_EQ(mirror_horizontal(mirror_horizontal(img)), img);
  EXPECT_NE(mirror_horizontal(img), img);
  EXPECT_EQ(mirror_horizontal(img).at(2, 0, 1), img.at(2, 6, 1));
}

TEST(Image, TensorRoundTrip) {
  const std::vector<Image> imgs{ramp(4, 4, 3), ramp(4, 4, 3)};
  const auto t = to_tensor(std::span<const Image>(imgs));
  ASSERT_EQ(t.sizes().vec(), (std::vector<std::int64_t>{2, 3, 4, 4}));
  EXPECT_FLOAT_EQ(t[0][1][2][3].item<float>(), imgs[0].at(2, 3, 1));
  EXPECT_EQ(images_from_tensor(t), imgs);
  EXPECT_EQ(image_from_tensor(t[1]), imgs[1]);
}

TEST(Image, MeanAbsDiff) {
  const Image a(2, 2, 1, 0.0F), b(2, 2, 1, 0.25F);
  EXPECT_DOUBLE_EQ(mean_abs_diff(a, b), 0.25);
  EXPECT_DOUBLE_EQ(mean_abs_diff(a, a), 0.0);
}

TEST(Image, ValidateRejectsBrokenBatches) {
  ImageBatch ok{torch::full({2, 1, 4, 4}, 0.5F), DomainTag::synthetic, {0, 1}};
  EXPECT_NO_THROW(validate(ok));

  auto wrong_rank = ok;
  wrong_rank.pixels = torch::zeros({2, 4, 4});
  EXPECT_THROW(validate(wrong_rank), ArgumentError);

  auto not_square = ok;
  not_square.pixels = torch::zeros({2, 1, 4, 5});
  EXPECT_THROW(validate(not_square), ArgumentError);

  auto bad_channels = ok;
  bad_channels.pixels = torch::zeros({2, 2, 4, 4});
  EXPECT_THROW(validate(bad_channels), ArgumentError);

  auto out_of_range = ok;
  out_of_range.pixels = torch::full({2, 1, 4, 4}, 1.5F);
  EXPECT_THROW(validate(out_of_range), ArgumentError);

  auto bad_labels = ok;
  bad_labels.labels = {0};
  EXPECT_THROW(validate(bad_labels), ArgumentError);
}

TEST(Image, DomainTagNames) {
  EXPECT_EQ(to_string(DomainTag::synthetic), "synthetic");
  EXPECT_EQ(to_string(DomainTag::generated), "generated");
  EXPECT_EQ(to_string(DomainTag::real), "real");
}

}  // namespace
}  // namespace morphgan
