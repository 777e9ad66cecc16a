#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "fixtures.hpp"
#include "morphgan/error.hpp"
#include "morphgan/nets.hpp"
#include "oracles.hpp"

namespace morphgan {
namespace {

using oracle::flatten;
using oracle::volume_of;

NetworkSpec make_spec(NetKind kind, int size, int base) {
  NetworkSpec s;
  s.kind = kind;
  s.input_size = size;
  s.base_channels = base;
  s.num_residual_blocks = 1;
  s.embedding_dim = 4;
  s.bottleneck = 3;
  s.depth = 1;
  return s;
}

/// Deterministic, non-degenerate hand-set weights in double precision.
WeightSet patterned(const NetworkSpec& spec, double scale = 0.4) {
  std::vector<WeightSet::Entry> entries;
  double phase = 0.0;
  for (const auto& p : parameter_layout(spec)) {
    auto t = torch::empty(p.shape, torch::kDouble);
    auto* d = t.data_ptr<double>();
    for (std::int64_t i = 0; i < t.numel(); ++i) d[i] = scale * std::sin(1.7 * (phase += 1.0));
    entries.emplace_back(p.name, t);
  }
  return WeightSet(std::move(entries));
}

torch::Tensor random_input(std::int64_t n, int c, int size, std::uint64_t seed) {
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({n, c, size, size}, gen, torch::kDouble);
}

WeightSet rebuild(const WeightSet& like, const std::vector<torch::Tensor>& tensors) {
  std::vector<WeightSet::Entry> entries;
  for (std::size_t i = 0; i < tensors.size(); ++i) entries.emplace_back(like.entries()[i].first, tensors[i]);
  return WeightSet(std::move(entries));
}

void expect_close(const oracle::Volume& a, const oracle::Volume& b, double tol) {
  ASSERT_EQ(a.v.size(), b.v.size());
  for (std::size_t i = 0; i < a.v.size(); ++i) ASSERT_NEAR(a.v[i], b.v[i], tol) << "element " << i;
}

// --------------------------------------------------------------------------

TEST(Generator, ShapePreservedAt32And108) {
  for (int size : {32, 108}) {
    NetworkSpec s;
    s.input_size = size;
    const auto w = init_weights(s, 1);
    const auto x = torch::rand({2, 1, size, size});
    const auto y = generator_forward(s, w, x, Mode::eval, 0);
    EXPECT_EQ(y.sizes(), x.sizes());
    EXPECT_GE(y.min().item<float>(), 0.0F);
    EXPECT_LE(y.max().item<float>(), 1.0F);
  }
}

TEST(Generator, EvalModeIsDeterministic) {
  NetworkSpec s;
  const auto w = init_weights(s, 3);
  const auto x = torch::rand({3, 1, 32, 32});
  EXPECT_TRUE(torch::equal(generator_forward(s, w, x, Mode::eval, 1), generator_forward(s, w, x, Mode::eval, 2)));
}

TEST(Generator, DropoutIsSeededInTrainMode) {
  NetworkSpec s;
  const auto w = init_weights(s, 3);
  const auto x = torch::rand({2, 1, 32, 32});
  const auto a = generator_forward(s, w, x, Mode::train, 10);
  EXPECT_TRUE(torch::equal(a, generator_forward(s, w, x, Mode::train, 10)));
  EXPECT_FALSE(torch::equal(a, generator_forward(s, w, x, Mode::train, 11)));
  EXPECT_FALSE(torch::equal(a, generator_forward(s, w, x, Mode::eval, 10)));

  auto inv = s;
  inv.kind = NetKind::inverse_generator;
  EXPECT_TRUE(torch::equal(generator_forward(inv, w, x, Mode::train, 10), generator_forward(inv, w, x, Mode::eval, 0)));
}

TEST(Generator, MatchesHandComputedForwardOnTinyNet) {
  const auto spec = make_spec(NetKind::generator, 4, 1);
  const auto w = patterned(spec);
  const auto x = random_input(2, 1, 4, 5);
  const auto y = generator_forward(spec, w, x, Mode::eval, 0);
  const auto fw = flatten(w);
  for (std::int64_t i = 0; i < 2; ++i)
    expect_close(volume_of(y, i), oracle::reference_generator(spec, fw, volume_of(x, i)), 1e-6);
}

TEST(Generator, MatchesReferenceWithoutSkipAndWithColour) {
  auto spec = make_spec(NetKind::generator, 6, 2);
  spec.use_skip = false;
  spec.channels = 3;
  spec.num_residual_blocks = 2;
  const auto w = patterned(spec, 0.3);
  const auto x = random_input(1, 3, 6, 6);
  expect_close(volume_of(generator_forward(spec, w, x, Mode::eval, 0), 0),
               oracle::reference_generator(spec, flatten(w), volume_of(x, 0)), 1e-6);
}

TEST(Generator, ZeroResidualAndDecoderReducesToSkipPath) {
  const auto spec = make_spec(NetKind::generator, 4, 1);
  const auto base = init_weights(spec, 9, torch::kDouble);
  auto zero_tail = [&](const WeightSet& w) {
    std::vector<torch::Tensor> ts;
    for (const auto& [name, t] : w.entries()) {
      const bool tail = name.starts_with("res") || name.starts_with("dec") || name.starts_with("out");
      ts.push_back(tail ? torch::zeros_like(t) : t);
    }
    return rebuild(w, ts);
  };
  const auto w = zero_tail(base);
  const auto x = random_input(3, 1, 4, 2);
  const auto y = generator_forward(spec, w, x, Mode::eval, 0);
  EXPECT_TRUE(torch::allclose(y, torch::sigmoid(4.0 * x - 2.0), 0.0, 1e-12));

  // Encoder weights no longer influence the output.
  const auto other = zero_tail(patterned(spec, 0.9));
  std::vector<torch::Tensor> ts;
  for (const auto& [name, t] : other.entries()) ts.push_back(name.starts_with("skip") ? w[name] : t);
  EXPECT_TRUE(torch::allclose(generator_forward(spec, rebuild(w, ts), x, Mode::eval, 0), y, 0.0, 1e-12));
}

TEST(Generator, RejectsMismatchedInputsAndWeights) {
  NetworkSpec s;
  const auto w = init_weights(s, 1);
  EXPECT_THROW(generator_forward(s, w, torch::rand({1, 1, 30, 30}), Mode::eval, 0), StructuralError);
  EXPECT_THROW(generator_forward(s, w, torch::rand({1, 3, 32, 32}), Mode::eval, 0), StructuralError);
  auto other = s;
  other.base_channels = 4;
  EXPECT_THROW(check_weights(other, w), StructuralError);
  EXPECT_NO_THROW(check_weights(s, w));
  auto odd = s;
  odd.input_size = 31;
  EXPECT_THROW(validate(odd), StructuralError);
}

TEST(Generator, InitialisationIsSeededAndStartsNearSkipMap) {
  NetworkSpec s;
  EXPECT_TRUE(init_weights(s, 4).bitwise_equal(init_weights(s, 4)));
  EXPECT_FALSE(init_weights(s, 4).bitwise_equal(init_weights(s, 5)));
  const auto x = torch::rand({4, 1, 32, 32});
  const auto y = generator_forward(s, init_weights(s, 4), x, Mode::eval, 0);
  EXPECT_LT((y - torch::sigmoid(4.0 * x - 2.0)).abs().mean().item<double>(), 0.1);
}

// --------------------------------------------------------------------------

TEST(Autoencoder, ShapeRangeAndDeterminism) {
  NetworkSpec s;
  s.kind = NetKind::autoencoder_discriminator;
  const auto w = init_weights(s, 2);
  const auto x = torch::rand({3, 1, 32, 32});
  const auto r = autoencode(s, w, x);
  EXPECT_EQ(r.sizes(), x.sizes());
  EXPECT_GE(r.min().item<float>(), 0.0F);
  EXPECT_LE(r.max().item<float>(), 1.0F);
  EXPECT_TRUE(torch::equal(r, autoencode(s, w, x)));
  EXPECT_GE((x - r).abs().mean().item<double>(), 0.0);
  EXPECT_THROW(autoencode(s, w, torch::rand({1, 1, 16, 16})), StructuralError);
}

TEST(Autoencoder, MatchesHandComputedForward) {
  for (int depth : {1, 2}) {
    auto spec = make_spec(NetKind::autoencoder_discriminator, 8, 2);
    spec.depth = depth;
    const auto w = patterned(spec, 0.3);
    const auto x = random_input(2, 1, 8, 3);
    const auto y = autoencode(spec, w, x);
    for (std::int64_t i = 0; i < 2; ++i)
      expect_close(volume_of(y, i), oracle::reference_autoencoder(spec, flatten(w), volume_of(x, i)), 1e-6);
  }
}

// --------------------------------------------------------------------------

TEST(Embedder, UnitRowsAndDeterminism) {
  NetworkSpec s;
  s.kind = NetKind::embedder;
  s.input_size = 28;
  const auto w = init_weights(s, 6);
  const auto x = torch::rand({5, 1, 28, 28});
  const auto e = embed(s, w, x);
  ASSERT_EQ(e.sizes().vec(), (std::vector<std::int64_t>{5, 32}));
  const auto norms = e.to(torch::kDouble).norm(2, {1});
  for (std::int64_t i = 0; i < 5; ++i) EXPECT_NEAR(norms[i].item<double>(), 1.0, 1e-6);
  EXPECT_TRUE(torch::equal(e, embed(s, w, x)));
  EXPECT_THROW(embed(s, w, torch::rand({1, 1, 32, 32})), StructuralError);
}

TEST(Embedder, MatchesHandComputedForward) {
  auto spec = make_spec(NetKind::embedder, 14, 2);
  const auto w = patterned(spec, 0.3);
  const auto x = random_input(2, 1, 14, 8);
  const auto e = embed(spec, w, x);
  for (std::int64_t i = 0; i < 2; ++i) {
    const auto ref = oracle::reference_embedder(spec, flatten(w), volume_of(x, i));
    for (std::size_t k = 0; k < ref.size(); ++k)
      EXPECT_NEAR(e[i][static_cast<std::int64_t>(k)].item<double>(), ref[k], 1e-6);
  }
}

// --------------------------------------------------------------------------

TEST(Augment, BatchMatchesImageAugmentation) {
  const auto& b = test::tiny_bundle();
  std::vector<Image> imgs;
  std::vector<AugmentParams> ps;
  for (std::size_t i = 0; i < 6; ++i) {
    imgs.push_back(b.unpaired_synthetic[i].image);
    ps.push_back(draw_augment(100 + i, 16, 14));
  }
  const auto out = augment_batch(to_tensor(std::span<const Image>(imgs)), ps);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const auto ref = apply_augment(imgs[i], ps[i]);
    const auto got = image_from_tensor(out[static_cast<std::int64_t>(i)]);
    ASSERT_EQ(got.height, ref.height);
    for (std::size_t k = 0; k < ref.size(); ++k) ASSERT_NEAR(got.data[k], ref.data[k], 1e-5);
  }
}

TEST(Augment, CenterCropMatchesCenterParams) {
  const auto& b = test::tiny_bundle();
  const auto& img = b.unpaired_synthetic[0].image;
  const auto t = to_tensor(std::span<const Image>(&img, 1));
  const auto ref = apply_augment(img, center_crop_params(16, 14));
  const auto got = image_from_tensor(center_crop(t, 14)[0]);
  for (std::size_t k = 0; k < ref.size(); ++k) ASSERT_NEAR(got.data[k], ref.data[k], 1e-6);
  EXPECT_THROW(center_crop(t, 17), ArgumentError);
}

// --------------------------------------------------------------------------

TEST(WeightSet, ValueSemantics) {
  NetworkSpec s;
  const auto w = init_weights(s, 1);
  EXPECT_EQ(w.version(), 0U);
  const auto w2 = w.with_tensors(w.tensors());
  EXPECT_EQ(w2.version(), 1U);
  EXPECT_TRUE(w.bitwise_equal(w2));
  EXPECT_TRUE(w.contains("skip.w"));
  EXPECT_FALSE(w.contains("nope"));
  EXPECT_THROW(w["nope"], StructuralError);
  EXPECT_TRUE(w.all_finite());
  auto ts = w.tensors();
  ts[0] = ts[0].clone();
  ts[0].view({-1})[0] = std::nan("");
  EXPECT_FALSE(w.with_tensors(ts).all_finite());
  EXPECT_EQ(w.to(torch::kDouble).tensors()[0].scalar_type(), torch::kDouble);
  std::int64_t n = 0;
  for (const auto& p : parameter_layout(s)) {
    std::int64_t k = 1;
    for (auto d : p.shape) k *= d;
    n += k;
  }
  EXPECT_EQ(w.parameter_count(), n);
}

TEST(WeightSet, NetKindNames) {
  for (auto k : {NetKind::generator, NetKind::inverse_generator, NetKind::autoencoder_discriminator, NetKind::embedder})
    EXPECT_EQ(net_kind_from_string(to_string(k)), k);
}

// --------------------------------------------------------------------------
// Finite-difference gradient checks on instances with at most 200 parameters.

double weight_gradient_error(const NetworkSpec& spec, const torch::Tensor& x) {
  const auto w = patterned(spec, 0.35);
  EXPECT_LE(w.parameter_count(), 200);
  return oracle::gradient_relative_error(
      [&](const std::vector<torch::Tensor>& ts) {
        const auto ws = rebuild(w, ts);
        switch (spec.kind) {
          case NetKind::autoencoder_discriminator: return autoencode(spec, ws, x).sum();
          case NetKind::embedder: return (embed(spec, ws, x) * torch::linspace(0.5, 1.5, spec.embedding_dim, torch::kDouble)).sum();
          default: return generator_forward(spec, ws, x, Mode::train, 3).sum();
        }
      },
      w.tensors());
}

TEST(Gradients, GeneratorWeights) {
  const auto spec = make_spec(NetKind::generator, 4, 1);
  EXPECT_LE(weight_gradient_error(spec, random_input(2, 1, 4, 1)), 1e-4);
}

TEST(Gradients, InverseGeneratorWeights) {
  const auto spec = make_spec(NetKind::inverse_generator, 4, 1);
  EXPECT_LE(weight_gradient_error(spec, random_input(2, 1, 4, 2)), 1e-4);
}

TEST(Gradients, AutoencoderWeights) {
  auto spec = make_spec(NetKind::autoencoder_discriminator, 4, 1);
  spec.bottleneck = 2;
  EXPECT_LE(weight_gradient_error(spec, random_input(2, 1, 4, 3)), 1e-4);
}

TEST(Gradients, EmbedderWeights) {
  const auto spec = make_spec(NetKind::embedder, 4, 1);
  EXPECT_LE(weight_gradient_error(spec, random_input(2, 1, 4, 4)), 1e-4);
}

TEST(Gradients, GeneratorInput) {
  const auto spec = make_spec(NetKind::generator, 4, 1);
  const auto w = patterned(spec, 0.35);
  EXPECT_LE(oracle::gradient_relative_error(
                [&](const std::vector<torch::Tensor>& in) {
                  return generator_forward(spec, w, in[0], Mode::eval, 0).sum();
                },
                {random_input(1, 1, 4, 5)}),
            1e-4);
}

TEST(Gradients, AugmentBatchInput) {
  const std::vector<AugmentParams> ps{draw_augment(1, 6, 4), draw_augment(2, 6, 4)};
  const auto weights = torch::linspace(-1.0, 1.0, 2 * 16, torch::kDouble).view({2, 1, 4, 4});
  EXPECT_LE(oracle::gradient_relative_error(
                [&](const std::vector<torch::Tensor>& in) { return (augment_batch(in[0], ps) * weights).sum(); },
                {random_input(2, 1, 6, 6)}),
            1e-4);
}

}  // namespace
}  // namespace morphgan
