#include <cmath>
#include <limits>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "morphgan/error.hpp"
#include "morphgan/losses.hpp"
#include "oracles.hpp"

namespace morphgan {
namespace {

using oracle::to_vector;

torch::Tensor rand_d(std::vector<std::int64_t> shape, std::uint64_t seed) {
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand(shape, gen, torch::kDouble);
}

double item(const torch::Tensor& t) { return t.item<double>(); }

// --------------------------------------------------------------------------
// Pixel losses

TEST(CycleLoss, Examples) {
  const auto x = rand_d({2, 1, 4, 4}, 1);
  EXPECT_EQ(item(cycle_loss(x, x)), 0.0);
  EXPECT_DOUBLE_EQ(item(cycle_loss(torch::zeros({2, 1, 4, 4}), torch::full({2, 1, 4, 4}, 0.5))), 0.5);
}

TEST(CycleLoss, MatchesDirectSummation) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = rand_d({3, 1, 5, 5}, 10 + s);
    const auto b = rand_d({3, 1, 5, 5}, 20 + s);
    EXPECT_NEAR(item(cycle_loss(a, b)), oracle::mp_mean_abs_diff(to_vector(b), to_vector(a)), 1e-7);
  }
}

TEST(BeganGenLoss, Examples) {
  const auto x = rand_d({2, 1, 4, 4}, 2);
  EXPECT_EQ(item(began_gen_loss(x, x)), 0.0);
  EXPECT_NEAR(item(began_gen_loss(x, x + 0.25)), 0.25, 1e-15);
  const auto y = rand_d({2, 1, 4, 4}, 3);
  EXPECT_NEAR(item(began_gen_loss(x, y)), oracle::mp_mean_abs_diff(to_vector(x), to_vector(y)), 1e-7);
}

TEST(IdentityPixelLoss, Examples) {
  const auto x = rand_d({2, 1, 4, 4}, 4);
  EXPECT_EQ(item(identity_pixel_loss(x, x)), 0.0);
  EXPECT_NEAR(item(identity_pixel_loss(x, x - 0.1)), 0.1, 1e-15);
  const auto y = rand_d({2, 1, 4, 4}, 5);
  EXPECT_NEAR(item(identity_pixel_loss(x, y)), oracle::mp_mean_abs_diff(to_vector(x), to_vector(y)), 1e-7);
}

TEST(PixelLosses, ShapeMismatchIsStructural) {
  const auto a = torch::zeros({1, 1, 4, 4});
  const auto b = torch::zeros({1, 1, 4, 5});
  EXPECT_THROW(cycle_loss(a, b), StructuralError);
  EXPECT_THROW(began_gen_loss(a, b), StructuralError);
  EXPECT_THROW(identity_pixel_loss(a, b), StructuralError);
  EXPECT_THROW(pair_disc_loss(a, b, torch::zeros({}), 0.0), StructuralError);
}

// --------------------------------------------------------------------------
// Boundary-equilibrium terms

TEST(BeganDiscLoss, Examples) {
  EXPECT_DOUBLE_EQ(began_disc_loss(0.4, 0.3, 0.1), 0.4 - 0.1 * 0.3);
  EXPECT_NEAR(began_disc_loss(0.4, 0.3, 0.1), 0.37, 1e-15);
  EXPECT_EQ(began_disc_loss(0.4, 0.3, 0.0), 0.4);
  EXPECT_EQ(began_disc_loss(0.4, 0.0, 0.7), 0.4);
  const auto t = began_disc_loss(torch::tensor(0.4, torch::kDouble), torch::tensor(0.3, torch::kDouble), 0.1);
  EXPECT_DOUBLE_EQ(item(t), began_disc_loss(0.4, 0.3, 0.1));
}

TEST(BeganDiscLoss, MatchesArbitraryPrecision) {
  for (int i = 0; i < 20; ++i) {
    const double r = 0.05 * i, g = 0.5 - 0.02 * i, k = 0.037 * i;
    EXPECT_NEAR(began_disc_loss(r, g, k), oracle::mp_disc_loss(r, g, k), 1e-6);
  }
}

TEST(UpdateK, Examples) {
  EXPECT_EQ(update_k(0.0, 2.0, 1.0, 0.001, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(update_k(0.1, 4.0, 1.0, 0.001, 0.5), 0.1 + 0.001 * (0.5 * 4.0 - 1.0));
  EXPECT_NEAR(update_k(0.1, 4.0, 1.0), 0.101, 1e-15);
  EXPECT_EQ(update_k(0.0, 0.0, 5.0), 0.0);
  EXPECT_EQ(update_k(0.9995, 1000.0, 0.0), 1.0);
}

TEST(UpdateK, NaNIsANumericError) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(update_k(nan, 1.0, 1.0), NumericError);
  EXPECT_THROW(update_k(0.0, nan, 1.0), NumericError);
  EXPECT_THROW(update_k(0.0, 1.0, nan), NumericError);
}

TEST(UpdateK, ConstantTermsMoveMonotonicallyToTheClamp) {
  for (const auto& [real, gen, target] : {std::tuple{4.0, 1.0, 1.0}, std::tuple{1.0, 3.0, 0.0}}) {
    double k = 0.5;
    for (int t = 0; t < 2000; ++t) {
      const double next = update_k(k, real, gen, 0.001, 0.5);
      if (target == 1.0) {
        ASSERT_GE(next, k);
      } else {
        ASSERT_LE(next, k);
      }
      ASSERT_GE(next, 0.0);
      ASSERT_LE(next, 1.0);
      k = next;
    }
    EXPECT_EQ(k, target);
  }
  // Balanced terms leave k where it is.
  EXPECT_EQ(update_k(0.3, 2.0, 1.0), 0.3);
}

TEST(PairDiscLoss, Examples) {
  const auto s = rand_d({2, 1, 4, 4}, 6);
  EXPECT_EQ(item(pair_disc_loss(s, s, torch::tensor(0.4, torch::kDouble), 0.0)), 0.0);
  const auto z = torch::zeros({1, 1, 2, 2}, torch::kDouble);
  EXPECT_NEAR(item(pair_disc_loss(z, z + 0.3, torch::tensor(0.2, torch::kDouble), 0.5)), 0.2, 1e-15);
  const auto r = rand_d({2, 1, 4, 4}, 7);
  double prev = std::numeric_limits<double>::infinity();
  for (double k : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double v = item(pair_disc_loss(s, r, torch::tensor(0.2, torch::kDouble), k));
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(PairDiscLoss, MatchesArbitraryPrecision) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = rand_d({2, 1, 3, 3}, 30 + seed);
    const auto r = rand_d({2, 1, 3, 3}, 40 + seed);
    const double cyc = 0.1 + 0.05 * static_cast<double>(seed), k = 0.2 * static_cast<double>(seed);
    EXPECT_NEAR(item(pair_disc_loss(s, r, torch::tensor(cyc, torch::kDouble), k)),
                oracle::mp_pair_disc_loss(to_vector(s), to_vector(r), cyc, k), 1e-6);
  }
}

// --------------------------------------------------------------------------
// Identity loss and centroids

CentroidStore store_with(const std::vector<std::int64_t>& labels, const std::vector<std::vector<double>>& centroids) {
  CentroidStore store(static_cast<int>(centroids.front().size()));
  store.register_labels(labels);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    store.entries().at(labels[i]).centroid = centroids[i];
    store.entries().at(labels[i]).initialized = true;
  }
  return store;
}

torch::Tensor rows(const std::vector<std::vector<double>>& v) {
  auto t = torch::empty({static_cast<std::int64_t>(v.size()), static_cast<std::int64_t>(v.front().size())},
                        torch::kDouble);
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t k = 0; k < v[i].size(); ++k)
      t[static_cast<std::int64_t>(i)][static_cast<std::int64_t>(k)] = v[i][k];
  return t;
}

std::vector<std::vector<double>> unit_rows(int n, int d, std::uint64_t seed) {
  auto t = torch::randn({n, d}, torch::make_generator<at::CPUGeneratorImpl>(seed), torch::kDouble);
  t = t / t.norm(2, {1}, true);
  std::vector<std::vector<double>> out;
  for (int i = 0; i < n; ++i) out.push_back(to_vector(t[i]));
  return out;
}

TEST(IdentityLoss, BatchOfOneIsRejected) {
  const auto store = store_with({0, 1}, {{0.0, 1.0}, {1.0, 0.0}});
  const std::vector<std::int64_t> labels{0};
  EXPECT_THROW(identity_set_loss(rows({{0.0, 1.0}}), labels, store), ArgumentError);
}

TEST(IdentityLoss, FewerThanTwoCentroidsIsAStateError) {
  const auto store = store_with({0}, {{0.0, 1.0}});
  const std::vector<std::int64_t> labels{0, 0};
  EXPECT_THROW(identity_set_loss(rows({{0.0, 1.0}, {1.0, 0.0}}), labels, store), StateError);
  const auto two = store_with({0, 1}, {{0.0, 1.0}, {1.0, 0.0}});
  const std::vector<std::int64_t> unknown{0, 5};
  EXPECT_THROW(identity_set_loss(rows({{0.0, 1.0}, {1.0, 0.0}}), unknown, two), StateError);
}

TEST(IdentityLoss, EmbeddingsAtCentroidsMatchArbitraryPrecision) {
  const std::vector<std::vector<double>> c{{0.0, 0.0}, {1.0, 0.0}};
  const auto store = store_with({3, 8}, c);
  const std::vector<std::int64_t> labels{3, 8};
  for (auto sign : {ExponentSign::magnet, ExponentSign::as_printed}) {
    IdentityLossOptions opt;
    opt.sign = sign;
    const double got = item(identity_set_loss(rows(c), labels, store, opt).loss);
    const double want =
        oracle::mp_identity_loss(c, c, {0, 1}, 1.0, sign == ExponentSign::magnet ? -1.0 : 1.0, opt.sigma_floor);
    EXPECT_NEAR(got, want, 1e-6);
  }
}

TEST(IdentityLoss, RandomInstancesMatchArbitraryPrecision) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = unit_rows(4, 3, 100 + seed);
    const auto e = unit_rows(5, 3, 200 + seed);
    const std::vector<std::int64_t> store_labels{2, 5, 7, 11};
    const std::vector<std::int64_t> labels{5, 2, 11, 5, 7};
    const std::vector<std::size_t> own{1, 0, 3, 1, 2};
    const auto store = store_with(store_labels, c);
    for (auto sign : {ExponentSign::magnet, ExponentSign::as_printed}) {
      IdentityLossOptions opt;
      opt.sign = sign;
      opt.eta = 0.5 + 0.1 * static_cast<double>(seed);
      const auto r = identity_set_loss(rows(e), labels, store, opt);
      EXPECT_NEAR(item(r.loss),
                  oracle::mp_identity_loss(e, c, own, opt.eta, sign == ExponentSign::magnet ? -1 : 1, opt.sigma_floor),
                  1e-6);
      EXPECT_TRUE(std::isfinite(r.sigma2));
    }
  }
}

TEST(IdentityLoss, MovingTowardOwnCentroidLowersTheLoss) {
  const auto c = unit_rows(3, 4, 7);
  const auto e = unit_rows(4, 4, 8);
  const std::vector<std::int64_t> labels{0, 1, 2, 0};
  const auto store = store_with({0, 1, 2}, c);
  const auto base = identity_set_loss(rows(e), labels, store);
  // Flooring sigma^2 at its current value freezes it for the moved batch.
  IdentityLossOptions frozen;
  frozen.sigma_floor = base.sigma2;
  for (std::size_t i = 0; i < e.size(); ++i) {
    auto moved = e;
    const auto& target = c[static_cast<std::size_t>(labels[i])];
    double norm = 0;
    for (std::size_t k = 0; k < 4; ++k) norm += (target[k] - e[i][k]) * (target[k] - e[i][k]);
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < 4; ++k) moved[i][k] += 0.01 * (target[k] - e[i][k]) / norm;
    const auto after = identity_set_loss(rows(moved), labels, store, frozen);
    EXPECT_DOUBLE_EQ(after.sigma2, base.sigma2);
    EXPECT_LT(item(after.loss), item(base.loss)) << "sample " << i;
  }
}

TEST(IdentityLoss, InvariantToRelabeling) {
  const auto c = unit_rows(4, 3, 50);
  const auto e = unit_rows(6, 3, 51);
  const std::vector<std::int64_t> ids{10, 20, 30, 40};
  const std::vector<std::int64_t> labels{10, 20, 10, 40, 30, 30};
  const auto a = item(identity_set_loss(rows(e), labels, store_with(ids, c)).loss);

  // Permute the label values; centroids travel with their identity.
  const std::map<std::int64_t, std::int64_t> perm{{10, 7}, {20, 3}, {30, 99}, {40, 1}};
  std::vector<std::int64_t> ids2, labels2;
  for (auto l : ids) ids2.push_back(perm.at(l));
  for (auto l : labels) labels2.push_back(perm.at(l));
  const auto b = item(identity_set_loss(rows(e), labels2, store_with(ids2, c)).loss);
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(IdentityLoss, ShapeErrors) {
  const auto store = store_with({0, 1}, {{0.0, 1.0}, {1.0, 0.0}});
  const std::vector<std::int64_t> labels{0, 1};
  const std::vector<std::int64_t> short_labels{0};
  EXPECT_THROW(identity_set_loss(torch::zeros({2, 3}, torch::kDouble), labels, store), StructuralError);
  EXPECT_THROW(identity_set_loss(torch::zeros({2, 2}, torch::kDouble), short_labels, store), StructuralError);
}

TEST(UpdateCentroids, Examples) {
  CentroidStore store(1, 0.95);
  const std::vector<std::int64_t> l0{0};
  store.register_labels(std::vector<std::int64_t>{0, 1});
  const auto one = torch::ones({1, 1}, torch::kDouble);
  const auto next = update_centroids(store, one, l0);
  EXPECT_EQ(next.at(0).centroid[0], 0.0 - 0.95 * (0.0 - 1.0));
  EXPECT_DOUBLE_EQ(next.at(0).centroid[0], 0.95);
  EXPECT_EQ(next.at(1).centroid[0], 0.0);
  EXPECT_TRUE(next.at(0).initialized);
  EXPECT_FALSE(next.at(1).initialized);
  EXPECT_EQ(store.at(0).centroid[0], 0.0);  // input untouched

  CentroidStore frozen(1, 0.0);
  frozen.register_labels(l0);
  EXPECT_EQ(update_centroids(frozen, one, l0).at(0).centroid[0], 0.0);

  CentroidStore retention(1, 0.95, true);
  retention.register_labels(l0);
  EXPECT_EQ(update_centroids(retention, one, l0).at(0).centroid[0], 0.0 - (1.0 - 0.95) * (0.0 - 1.0));
}

TEST(UpdateCentroids, SequentialInBatchOrder) {
  CentroidStore store(1, 0.5);
  const std::vector<std::int64_t> labels{4, 4};
  const auto e = rows({{1.0}, {3.0}});
  // 0 -> 0.5 -> 0.5 - 0.5 * (0.5 - 3) = 1.75
  const auto next = update_centroids(store, e, labels);
  EXPECT_EQ(next.at(4).centroid[0], 1.75);
  EXPECT_EQ(next.size(), 1U);
}

TEST(UpdateCentroids, IdempotentAtCentroids) {
  const auto c = unit_rows(3, 4, 9);
  const auto store = store_with({0, 1, 2}, c);
  const std::vector<std::int64_t> labels{2, 0, 1, 0};
  const auto e = rows({c[2], c[0], c[1], c[0]});
  EXPECT_EQ(update_centroids(store, e, labels), store);
  EXPECT_THROW(update_centroids(store, torch::zeros({4, 3}, torch::kDouble), labels), StructuralError);
}

TEST(CentroidStore, MatrixFollowsLabelOrder) {
  const auto store = store_with({9, 2}, {{1.0, 2.0}, {3.0, 4.0}});
  EXPECT_EQ(store.labels(), (std::vector<std::int64_t>{2, 9}));
  const auto m = store.matrix();
  EXPECT_EQ(m[0][0].item<double>(), 3.0);
  EXPECT_EQ(m[1][1].item<double>(), 2.0);
  EXPECT_THROW(store.at(5), StateError);
  EXPECT_THROW(CentroidStore(0), ArgumentError);
}

// --------------------------------------------------------------------------
// Finite-difference gradients w.r.t. every input array

TEST(LossGradients, PixelLosses) {
  const auto a = rand_d({2, 1, 3, 3}, 60);
  const auto b = rand_d({2, 1, 3, 3}, 61);
  using F = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;
  for (const F& f : {F(cycle_loss), F(began_gen_loss), F(identity_pixel_loss)}) {
    EXPECT_LE(oracle::gradient_relative_error([&](const auto& in) { return f(in[0], in[1]); }, {a, b}), 1e-4);
  }
}

TEST(LossGradients, DiscriminatorTerms) {
  const auto s = rand_d({2, 1, 3, 3}, 62);
  const auto r = rand_d({2, 1, 3, 3}, 63);
  const auto cyc = torch::tensor(0.3, torch::kDouble);
  EXPECT_LE(oracle::gradient_relative_error([](const auto& in) { return pair_disc_loss(in[0], in[1], in[2], 0.4); },
                                            {s, r, cyc}),
            1e-4);
  EXPECT_LE(oracle::gradient_relative_error([](const auto& in) { return began_disc_loss(in[0], in[1], 0.3); },
                                            {torch::tensor(0.5, torch::kDouble), torch::tensor(0.2, torch::kDouble)}),
            1e-4);
}

TEST(LossGradients, IdentityLoss) {
  const auto c = unit_rows(3, 3, 70);
  const auto e = rows(unit_rows(4, 3, 71));
  const auto store = store_with({0, 1, 2}, c);
  const std::vector<std::int64_t> labels{0, 1, 2, 1};
  for (auto sign : {ExponentSign::magnet, ExponentSign::as_printed}) {
    IdentityLossOptions live;
    live.sign = sign;
    live.sigma_stop_gradient = false;
    EXPECT_LE(oracle::gradient_relative_error(
                  [&](const auto& in) { return identity_set_loss(in[0], labels, store, live).loss; }, {e}),
              1e-4);
    // With sigma pinned by its floor, the stop-gradient path is exact too.
    IdentityLossOptions pinned;
    pinned.sign = sign;
    pinned.sigma_floor = 10.0;
    EXPECT_LE(oracle::gradient_relative_error(
                  [&](const auto& in) { return identity_set_loss(in[0], labels, store, pinned).loss; }, {e}),
              1e-4);
  }
}

TEST(LossWeights, NegativeIsAConfigError) {
  LossWeights w;
  EXPECT_NO_THROW(validate(w));
  w.lambda_dp = -0.1;
  EXPECT_THROW(validate(w), ConfigError);
}

}  // namespace
}  // namespace morphgan
