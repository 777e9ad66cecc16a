#include <cmath>
#include <fstream>
#include <map>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "fixtures.hpp"
#include "morphgan/error.hpp"
#include "morphgan/eval.hpp"
#include "morphgan/trainer.hpp"

namespace morphgan {
namespace {

using test::tiny_bundle;
using test::tiny_config;
using test::tiny_embedder;

WeightSet constant_set(const std::vector<double>& values) {
  std::vector<WeightSet::Entry> entries;
  for (std::size_t i = 0; i < values.size(); ++i)
    entries.emplace_back("t" + std::to_string(i), torch::full({2, 2}, values[i], torch::kDouble));
  return WeightSet(std::move(entries));
}

// --------------------------------------------------------------------------
// Schedules and optimiser

TEST(LrAt, ReferenceScheduleExamples) {
  TrainConfig c;
  c.total_iters = kReferenceTotalIters;
  EXPECT_EQ(lr_at(0, c), 8e-5);
  EXPECT_EQ(lr_at(127999, c), 8e-5);
  EXPECT_EQ(lr_at(128000, c), 4e-5);
  EXPECT_EQ(lr_at(128001, c), 4e-5);
  EXPECT_EQ(lr_at(192000, c), 2e-5);
  EXPECT_EQ(lr_at(247001, c), 6.25e-7);
  EXPECT_EQ(lr_at(247001, c), 8e-5 / 128);
}

TEST(LrAt, ScaledScheduleHalvesSevenTimes) {
  TrainConfig c;
  c.total_iters = 5000;
  EXPECT_EQ(lr_at(0, c), 8e-5);
  EXPECT_EQ(lr_at(2581, c), 4e-5);
  EXPECT_EQ(lr_at(4999, c), 8e-5 / 128);
}

TEST(EmaUpdate, Examples) {
  const auto ema = constant_set({0.0, 1.0});
  const auto cur = constant_set({2.0, -3.0});
  EXPECT_TRUE(ema_update(ema, cur, 0.0).bitwise_equal(cur));
  EXPECT_TRUE(ema_update(ema, cur, 1.0).bitwise_equal(ema));
  const auto out = ema_update(ema, cur, 0.999);
  EXPECT_EQ(out.tensors()[0][0][0].item<double>(), 0.0 * 0.999 + 2.0 * (1.0 - 0.999));
  EXPECT_NEAR(out.tensors()[0][0][0].item<double>(), 0.002, 1e-15);
  EXPECT_EQ(out.tensors()[1][1][1].item<double>(), 1.0 * 0.999 + -3.0 * (1.0 - 0.999));
  EXPECT_EQ(out.version(), ema.version() + 1);
  EXPECT_THROW(ema_update(ema, constant_set({1.0}), 0.5), StructuralError);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  const auto w = constant_set({1.0, -2.0});
  const std::vector<torch::Tensor> g{torch::full({2, 2}, 0.5, torch::kDouble), torch::Tensor()};
  const AdamConfig cfg;
  const auto up = adam_step(w, g, AdamState::zeros_like(w), 0.1, cfg);
  // m_hat = g, v_hat = g^2 at step 1.
  EXPECT_NEAR(up.weights.tensors()[0][0][0].item<double>(), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-14);
  EXPECT_EQ(up.weights.tensors()[1][0][0].item<double>(), -2.0);  // undefined gradient counts as zero
  EXPECT_EQ(up.state.step, 1);
  EXPECT_NEAR(up.state.m[0][0][0].item<double>(), 0.05, 1e-15);
  EXPECT_NEAR(up.state.v[0][0][0].item<double>(), 0.00025, 1e-15);

  const auto up2 = adam_step(up.weights, g, up.state, 0.1, cfg);
  const double m = 0.9 * 0.05 + 0.1 * 0.5, v = 0.999 * 0.00025 + 0.001 * 0.25;
  const double expect = up.weights.tensors()[0][0][0].item<double>() -
                        0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  EXPECT_NEAR(up2.weights.tensors()[0][0][0].item<double>(), expect, 1e-14);
  EXPECT_THROW(adam_step(w, {g[0]}, AdamState::zeros_like(w), 0.1, cfg), StructuralError);
}

// --------------------------------------------------------------------------
// Single step

struct StepFixture : ::testing::Test {
  TrainConfig config = tiny_config();
  TrainState state;
  StepBatches batches;

  void SetUp() override {
    state = init_state(config, tiny_embedder());
    batches = sample_batches(tiny_bundle(), config, 0);
  }
};

TEST_F(StepFixture, InitialStateRegistersTrainingIdentities) {
  EXPECT_EQ(state.centroids.size(), 6U);
  EXPECT_TRUE(state.centroids.contains(0));
  EXPECT_FALSE(state.centroids.contains(6));
  EXPECT_TRUE(state.ema_g.bitwise_equal(state.g));
  EXPECT_EQ(state.iteration, 0);
  EXPECT_FALSE(state.g.bitwise_equal(state.g_inv));
  EXPECT_FALSE(state.d_real.bitwise_equal(state.d_syn));
  EXPECT_TRUE(init_state(config, tiny_embedder()).bitwise_equal(state));
}

TEST_F(StepFixture, BatchesAreDeterministicAndWellFormed) {
  const auto again = sample_batches(tiny_bundle(), config, 0);
  EXPECT_TRUE(torch::equal(again.synthetic.pixels, batches.synthetic.pixels));
  EXPECT_EQ(again.synthetic.labels, batches.synthetic.labels);
  EXPECT_FALSE(torch::equal(sample_batches(tiny_bundle(), config, 1).synthetic.pixels, batches.synthetic.pixels));
  for (const auto* b : {&batches.synthetic, &batches.real, &batches.paired_synthetic, &batches.paired_real}) {
    EXPECT_EQ(b->size(), config.batch_size);
    EXPECT_NO_THROW(validate(*b));
  }
  for (auto l : batches.synthetic.labels) EXPECT_LT(l, 6);
  for (auto l : batches.real.labels) EXPECT_GE(l, 6);
  // Paired halves stay aligned.
  for (std::int64_t i = 0; i < config.batch_size; ++i) {
    const auto s = image_from_tensor(batches.paired_synthetic.pixels[i]);
    const auto r = image_from_tensor(batches.paired_real.pixels[i]);
    bool found = false;
    for (const auto& p : tiny_bundle().paired) found = found || (p.synthetic == s && p.real == r);
    EXPECT_TRUE(found) << "pair " << i;
  }
}

TEST_F(StepFixture, Deterministic) {
  const auto a = train_step(state, batches, config);
  const auto b = train_step(state, batches, config);
  EXPECT_TRUE(a.state.bitwise_equal(b.state));
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_EQ(a.state.iteration, 1);
  EXPECT_TRUE(a.metrics.all_finite());
  EXPECT_FALSE(a.state.g.bitwise_equal(state.g));
  EXPECT_EQ(a.state.opt_g.step, 1);
}

TEST_F(StepFixture, EmbedderStaysFrozen) {
  auto s = state;
  for (int i = 0; i < 3; ++i) s = train_step(s, sample_batches(tiny_bundle(), config, i), config).state;
  EXPECT_TRUE(s.embedder.bitwise_equal(tiny_embedder()));
}

TEST_F(StepFixture, CompositeObjectivesAreWeightedSums) {
  config.arch.dropout_keep = 1.0;  // no dropout, so the test can replay the forward passes
  config.weights = {0.7, 0.3, 0.05, 0.2};
  state = init_state(config, tiny_embedder());
  state.equilibrium.k_dr = 0.2;
  state.equilibrium.k_ds = 0.4;
  state.equilibrium.k_dp = 0.6;
  const auto r = train_step(state, batches, config);
  const auto& m = r.metrics;
  const auto& w = config.weights;
  EXPECT_NEAR(m.objective_g, m.loss_g + w.lambda_cyc * m.loss_cyc + w.lambda_c * m.loss_c + w.lambda_id * m.loss_id,
              1e-6);
  EXPECT_NEAR(m.objective_g_inv, m.loss_g_inv + w.lambda_cyc * m.loss_cyc + w.lambda_dp * m.loss_dp, 1e-6);
  EXPECT_NEAR(m.objective_d, m.loss_dr + m.loss_ds, 1e-6);

  // Replay every term from the pre-step weights.
  torch::NoGradGuard ng;
  const auto x = batches.synthetic.pixels, y = batches.real.pixels;
  const auto ps = batches.paired_synthetic.pixels, pr = batches.paired_real.pixels;
  const auto gs = generator_spec(config), gis = inverse_generator_spec(config), ds = discriminator_spec(config);
  const auto gx = generator_forward(gs, state.g, x, Mode::eval, 0);
  const auto cyc = generator_forward(gis, state.g_inv, gx, Mode::eval, 0);
  const double l_cyc = (cyc - x).abs().mean().item<double>();
  const double l_g = (gx - autoencode(ds, state.d_real, gx)).abs().mean().item<double>();
  const double l_gi = (cyc - autoencode(ds, state.d_syn, cyc)).abs().mean().item<double>();
  const double err_r = (y - autoencode(ds, state.d_real, y)).abs().mean().item<double>();
  const double err_s = (x - autoencode(ds, state.d_syn, x)).abs().mean().item<double>();
  const double pair = (ps - generator_forward(gis, state.g_inv, pr, Mode::eval, 0)).abs().mean().item<double>();
  const double l_id = (x - gx).abs().mean().item<double>();
  EXPECT_NEAR(m.loss_cyc, l_cyc, 1e-6);
  EXPECT_NEAR(m.loss_g, l_g, 1e-6);
  EXPECT_NEAR(m.loss_g_inv, l_gi, 1e-6);
  EXPECT_NEAR(m.loss_id, l_id, 1e-6);
  EXPECT_NEAR(m.loss_dr, err_r - 0.2 * l_g, 1e-6);
  EXPECT_NEAR(m.loss_ds, err_s - 0.4 * l_gi, 1e-6);
  EXPECT_NEAR(m.loss_dp, pair - 0.6 * l_cyc, 1e-6);
  EXPECT_NEAR(m.objective_g, l_g + 0.7 * l_cyc + 0.05 * m.loss_c + 0.2 * l_id, 1e-6);
  EXPECT_NEAR(m.objective_g_inv, l_gi + 0.7 * l_cyc + 0.3 * (pair - 0.6 * l_cyc), 1e-6);
  EXPECT_DOUBLE_EQ(m.k_dr, update_k(0.2, m.real_err_r, m.loss_g));
  EXPECT_DOUBLE_EQ(m.k_dp, update_k(0.6, m.pair_term, m.loss_cyc));
}

TEST_F(StepFixture, ZeroWeightsWithDetachedAdversaryLeaveGeneratorUnchanged) {
  config.weights = {0.0, 0.0, 0.0, 0.0};
  config.detach_adversarial = true;
  const auto r = train_step(state, batches, config);
  EXPECT_TRUE(r.state.g.bitwise_equal(state.g));
  EXPECT_TRUE(r.state.g_inv.bitwise_equal(state.g_inv));
  EXPECT_FALSE(r.state.d_real.bitwise_equal(state.d_real));
}

TEST_F(StepFixture, ObjectivesOnlyReachTheirOwnParameters) {
  state.equilibrium = {0.3, 0.3, 0.3, 0.001, 0.5};
  // L_DP depends on G through L_cyc when k_DP > 0, yet must not move G.
  auto low = config, high = config;
  low.weights.lambda_dp = 0.1;
  high.weights.lambda_dp = 5.0;
  const auto a = train_step(state, batches, low);
  const auto b = train_step(state, batches, high);
  EXPECT_TRUE(a.state.g.bitwise_equal(b.state.g));
  EXPECT_TRUE(a.state.d_real.bitwise_equal(b.state.d_real));
  EXPECT_FALSE(a.state.g_inv.bitwise_equal(b.state.g_inv));

  // L_G in the generator objective must not move D_R, and vice versa.
  auto detached = config;
  detached.detach_adversarial = true;
  const auto c = train_step(state, batches, config);
  const auto d = train_step(state, batches, detached);
  EXPECT_TRUE(c.state.d_real.bitwise_equal(d.state.d_real));
  EXPECT_TRUE(c.state.d_syn.bitwise_equal(d.state.d_syn));
  EXPECT_FALSE(c.state.g.bitwise_equal(d.state.g));

  // Changing a generator-only weight leaves both discriminators alone.
  auto no_cyc = config;
  no_cyc.weights.lambda_cyc = 0.0;
  const auto e = train_step(state, batches, no_cyc);
  EXPECT_TRUE(c.state.d_real.bitwise_equal(e.state.d_real));
  EXPECT_TRUE(c.state.d_syn.bitwise_equal(e.state.d_syn));
}

TEST_F(StepFixture, NonFiniteLossAbortsWithRecord) {
  auto ts = state.d_real.tensors();
  ts[0] = ts[0].clone();
  ts[0].view({-1})[0] = std::nan("");
  state.d_real = state.d_real.with_tensors(ts);
  try {
    train_step(state, batches, config);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.record().iteration, 0);
    EXPECT_FALSE(e.record().all_finite());
  }
  EXPECT_THROW(train_step(state, batches, config), NumericError);
}

TEST_F(StepFixture, BatchOfOneIsRejected) {
  auto one = batches;
  one.synthetic.pixels = one.synthetic.pixels.narrow(0, 0, 1);
  one.synthetic.labels.resize(1);
  EXPECT_THROW(train_step(state, one, config), ArgumentError);
}

// --------------------------------------------------------------------------
// Training loop

TEST(Train, OneRecordPerIterationAndClampedK) {
  const auto cfg = tiny_config();
  const auto dir = test::scratch_dir("train_log");
  TrainResult result;
  {
    MetricsLog log(dir / "metrics.jsonl");
    TrainOptions opts;
    opts.log = &log;
    result = train(cfg, tiny_bundle(), tiny_embedder(), opts);
  }
  const auto records = MetricsLog::read(dir / "metrics.jsonl");
  ASSERT_EQ(records.size(), static_cast<std::size_t>(cfg.total_iters));
  ASSERT_EQ(result.metrics.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(records[i].iteration, static_cast<std::int64_t>(i));
    EXPECT_EQ(records[i], result.metrics[i]);
    EXPECT_TRUE(records[i].all_finite());
    for (double k : {records[i].k_dr, records[i].k_ds, records[i].k_dp}) {
      EXPECT_GE(k, 0.0);
      EXPECT_LE(k, 1.0);
    }
  }
  EXPECT_EQ(result.state.iteration, cfg.total_iters);
  EXPECT_TRUE(result.state.embedder.bitwise_equal(tiny_embedder()));
}

TEST(Train, StopAtAndContinueMatchesOneRun) {
  const auto cfg = tiny_config();
  const auto full = train(cfg, tiny_bundle(), tiny_embedder());
  TrainOptions first;
  first.stop_at = 5;
  const auto part = train(cfg, tiny_bundle(), tiny_embedder(), first);
  EXPECT_EQ(part.metrics.size(), 5U);
  const auto rest = train(cfg, tiny_bundle(), part.state);
  EXPECT_TRUE(rest.state.bitwise_equal(full.state));
  for (std::size_t i = 0; i < rest.metrics.size(); ++i) EXPECT_EQ(rest.metrics[i], full.metrics[i + 5]);
}

TEST(Train, WritesGridsAndCheckpointsWhenGivenADirectory) {
  auto cfg = tiny_config();
  cfg.grid_every = 4;
  cfg.checkpoint_every = 6;
  const auto dir = test::scratch_dir("train_out");
  TrainOptions opts;
  opts.out_dir = dir;
  int calls = 0;
  opts.on_step = [&calls](const StepMetrics&) { ++calls; };
  train(cfg, tiny_bundle(), tiny_embedder(), opts);
  EXPECT_EQ(calls, cfg.total_iters);
  EXPECT_TRUE(std::filesystem::exists(dir / "grids" / "iter_4.png"));
  EXPECT_TRUE(std::filesystem::exists(dir / "grids" / "iter_12.png"));
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints" / "latest.ckpt"));
  EXPECT_EQ(checkpoint_load(dir / "checkpoints" / "latest.ckpt").iteration, 12);
}

TEST(Train, DivergenceWritesADiagnosticRecord) {
  const auto cfg = tiny_config();
  auto s = init_state(cfg, tiny_embedder());
  auto ts = s.g.tensors();
  ts[0] = ts[0].clone();
  ts[0].view({-1})[0] = std::nan("");
  s.g = s.g.with_tensors(ts);
  const auto dir = test::scratch_dir("train_diverge");
  {
    MetricsLog log(dir / "metrics.jsonl");
    TrainOptions opts;
    opts.log = &log;
    EXPECT_THROW(train(cfg, tiny_bundle(), s, opts), TrainingDiverged);
  }
  std::ifstream is(dir / "metrics.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(is, line));
  const auto j = nlohmann::json::parse(line);
  EXPECT_TRUE(j.contains("diagnostic"));
  EXPECT_TRUE(MetricsLog::read(dir / "metrics.jsonl").empty());
}

TEST(Train, RejectsBundleFromOtherConfig) {
  auto cfg = tiny_config();
  cfg.data.seed = 77;
  EXPECT_THROW(train(cfg, tiny_bundle(), tiny_embedder()), ConfigError);
}

TEST(StepMetrics, JsonRoundTrip) {
  StepMetrics m;
  m.iteration = 7;
  m.loss_g = 0.125;
  m.k_dp = 1.0 / 3.0;
  m.lr = 8e-5;
  EXPECT_EQ(StepMetrics::from_json(m.to_json()), m);
  m.loss_c = std::nan("");
  EXPECT_FALSE(m.all_finite());
}

// --------------------------------------------------------------------------
// Embedder pretraining

TEST(Pretrain, DeterministicPerSeed) {
  const auto cfg = tiny_config();
  const auto a = pretrain_embedder(tiny_bundle().pretrain_real, cfg);
  EXPECT_TRUE(a.bitwise_equal(tiny_embedder()));
  auto other = cfg;
  other.seed = 2;
  EXPECT_FALSE(pretrain_embedder(tiny_bundle().pretrain_real, other).bitwise_equal(a));
  for (const auto& t : a.tensors()) EXPECT_FALSE(t.requires_grad());
  EXPECT_NO_THROW(check_weights(embedder_spec(cfg), a));
}

TEST(Pretrain, OverlappingIdentitiesAreAConfigError) {
  std::vector<RealSample> set = tiny_bundle().pretrain_real;
  set.push_back(tiny_bundle().unpaired_real.front());
  EXPECT_THROW(pretrain_embedder(set, tiny_config()), ConfigError);
  std::vector<RealSample> heldout{{tiny_bundle().heldout.front().params.identity_label, tiny_bundle().heldout.front().real}};
  EXPECT_THROW(pretrain_embedder(heldout, tiny_config()), ConfigError);
}

TEST(Pretrain, HeldOutNearestCentroidBeatsChanceTenfold) {
  const TrainConfig cfg;
  const auto bundle = build_datasets(cfg.data);
  const auto emb = pretrain_embedder(bundle.pretrain_real, cfg);
  std::vector<Image> images;
  std::vector<std::int64_t> labels;
  for (const auto& p : bundle.heldout) {
    images.push_back(p.real);
    labels.push_back(p.params.identity_label);
  }
  const auto e = embed_images(embedder_spec(cfg), emb, images).to(torch::kDouble);
  std::map<std::int64_t, torch::Tensor> centroid;
  std::map<std::int64_t, int> seen;
  std::vector<std::size_t> probes;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (seen[labels[i]]++ < 5) {
      auto& c = centroid[labels[i]];
      c = c.defined() ? c + e[static_cast<std::int64_t>(i)] : e[static_cast<std::int64_t>(i)].clone();
    } else {
      probes.push_back(i);
    }
  }
  int correct = 0;
  for (auto i : probes) {
    double best = 1e300;
    std::int64_t arg = -1;
    for (const auto& [l, c] : centroid) {
      const double d = (e[static_cast<std::int64_t>(i)] - c / 5.0).pow(2).sum().item<double>();
      if (d < best) best = d, arg = l;
    }
    correct += arg == labels[i];
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(probes.size());
  const double chance = 1.0 / static_cast<double>(centroid.size());
  EXPECT_EQ(centroid.size(), 50U);
  EXPECT_GT(accuracy, 10.0 * chance) << "accuracy " << accuracy;
}

}  // namespace
}  // namespace morphgan
