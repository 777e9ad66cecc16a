#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/types.h>

#include "morphgan/config.hpp"
#include "morphgan/error.hpp"
#include "morphgan/losses.hpp"
#include "morphgan/nets.hpp"
#include "morphgan/toymm.hpp"

namespace morphgan {

// ---------------------------------------------------------------------------
// Optimiser and schedules
// ---------------------------------------------------------------------------

/// ADAM first/second moments for one WeightSet.
struct AdamState {
  std::vector<torch::Tensor> m;
  std::vector<torch::Tensor> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const WeightSet& w);
  bool bitwise_equal(const AdamState& other) const;
};

struct AdamUpdate {
  WeightSet weights;
  AdamState state;
};

/// One bias-corrected ADAM step. Undefined gradients count as zero.
AdamUpdate adam_step(const WeightSet& weights, const std::vector<torch::Tensor>& grads, const AdamState& state,
                     double lr, const AdamConfig& config);

/// base_lr * 2^-(number of milestones <= iteration)
double lr_at(std::int64_t iteration, const TrainConfig& config);

/// decay * ema + (1 - decay) * current, elementwise.
WeightSet ema_update(const WeightSet& ema, const WeightSet& current, double decay);

// ---------------------------------------------------------------------------
// Training state
// ---------------------------------------------------------------------------

struct TrainState {
  std::int64_t iteration = 0;
  WeightSet g;
  WeightSet g_inv;
  WeightSet d_real;
  WeightSet d_syn;
  WeightSet embedder;  ///< frozen
  WeightSet ema_g;
  WeightSet ema_g_inv;
  EquilibriumState equilibrium;
  CentroidStore centroids;
  AdamState opt_g;
  AdamState opt_g_inv;
  AdamState opt_d_real;
  AdamState opt_d_syn;

  bool bitwise_equal(const TrainState& other) const;
};

/// Fresh state: seeded weights, EMA copies, zero moments, zero centroids for
/// every synthetic training identity.
TrainState init_state(const TrainConfig& config, const WeightSet& embedder);

struct StepBatches {
  ImageBatch synthetic;         ///< x from S, with identity labels
  ImageBatch real;              ///< y from R
  ImageBatch paired_synthetic;  ///< s from P_S
  ImageBatch paired_real;       ///< r from P_R, aligned with s
};

/// Deterministic mini-batches for one iteration (uniform with replacement).
StepBatches sample_batches(const DatasetBundle& bundle, const TrainConfig& config, std::int64_t iteration);

/// Every scalar logged for one iteration.
struct StepMetrics {
  std::int64_t iteration = 0;
  double loss_g = 0, loss_g_inv = 0, loss_cyc = 0, loss_dr = 0, loss_ds = 0, loss_dp = 0, loss_c = 0, loss_id = 0;
  double real_err_r = 0, real_err_s = 0, pair_term = 0;
  double objective_g = 0, objective_g_inv = 0, objective_d = 0;
  double k_dr = 0, k_ds = 0, k_dp = 0;  ///< after this step's update
  double sigma2 = 0;
  double lr = 0;

  nlohmann::json to_json() const;
  static StepMetrics from_json(const nlohmann::json& j);
  bool all_finite() const;
  bool operator==(const StepMetrics&) const = default;
};

/// Raised when a loss becomes non-finite; carries the offending record.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, StepMetrics record) : NumericError(what), record_(record) {}
  const StepMetrics& record() const { return record_; }

 private:
  StepMetrics record_;
};

struct StepResult {
  TrainState state;
  StepMetrics metrics;
};

/// One simultaneous update of G, G', D_R and D_S from the same pre-step
/// weights. Each objective is differentiated only w.r.t. its own network:
///   G      : L_G + lambda_cyc L_cyc + lambda_C L_C + lambda_id L_id
///   G'     : L_G' + lambda_cyc L_cyc + lambda_DP L_DP
///   D_R,D_S: L_DR + L_DS
/// followed by the k updates, centroid update, EMA update and iteration++.
StepResult train_step(const TrainState& state, const StepBatches& batches, const TrainConfig& config);

/// Append-only line-delimited JSON log, one record per iteration.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::filesystem::path& path, bool append = false);

  bool is_open() const { return out_.is_open(); }
  void write(const StepMetrics& m);
  void write_diagnostic(const nlohmann::json& record);

  static std::vector<StepMetrics> read(const std::filesystem::path& path);

 private:
  std::ofstream out_;
};

struct TrainOptions {
  std::filesystem::path out_dir;  ///< grids/checkpoints go here when set
  MetricsLog* log = nullptr;
  /// Stop before this iteration (exclusive); negative means total_iters.
  std::int64_t stop_at = -1;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  TrainState state;
  std::vector<StepMetrics> metrics;
};

TrainResult train(const TrainConfig& config, const DatasetBundle& bundle, TrainState initial,
                  const TrainOptions& options = {});
TrainResult train(const TrainConfig& config, const DatasetBundle& bundle, const WeightSet& embedder,
                  const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Embedder pretraining
// ---------------------------------------------------------------------------

/// One labelled source for classifier training, with its own softmax head.
struct ClassificationSet {
  std::vector<const Image*> images;
  std::vector<std::int64_t> labels;
  double loss_weight = 1.0;
};

/// Cosine-softmax classification under random crop/rotate/flip. Every
/// iteration draws one batch per set; the loss is the weighted sum of the
/// per-set cross entropies. Returns the embedding trunk only.
WeightSet train_classifier(const NetworkSpec& spec, std::span<const ClassificationSet> sets,
                           const PretrainConfig& schedule, const AdamConfig& adam, std::uint64_t seed);

/// Softmax-classification pretraining on toy-real identities that are
/// disjoint from every training and evaluation split. The head is dropped;
/// the returned weights are detached (frozen).
WeightSet pretrain_embedder(std::span<const RealSample> pretrain_set, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Archive layout: "MGCKPT\0\0", u32 version, u64 manifest length, manifest
/// JSON, u32 entry count, entries (u32 name length, name, array record),
/// u64 FNV-1a of every preceding byte.
void checkpoint_save(const TrainState& state, const TrainConfig& config, const std::filesystem::path& path);
TrainState checkpoint_load(const std::filesystem::path& path, TrainConfig* config_out = nullptr);

/// Single weight-set archives (same container) for the pretrained embedder.
void save_weights(const WeightSet& weights, const NetworkSpec& spec, const std::filesystem::path& path);
WeightSet load_weights(const std::filesystem::path& path, NetworkSpec* spec_out = nullptr);

}  // namespace morphgan
