#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "morphgan/losses.hpp"
#include "morphgan/nets.hpp"
#include "morphgan/toymm.hpp"

namespace morphgan {

/// Architecture knobs shared by the four trained networks and the embedder.
struct ArchitectureConfig {
  int gen_base_channels = 8;
  int num_residual_blocks = 3;
  bool use_skip = true;
  double dropout_keep = 0.9;
  int disc_base_channels = 8;
  int disc_bottleneck = 64;
  int disc_depth = 2;
  int emb_base_channels = 16;
  int embedding_dim = 32;

  bool operator==(const ArchitectureConfig&) const = default;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

/// Softmax pretraining of the frozen embedder on toy-real identities.
struct PretrainConfig {
  int iterations = 1500;
  int batch_size = 32;
  double lr = 2e-3;
  double logit_scale = 16.0;

  bool operator==(const PretrainConfig&) const = default;
};

struct EvalConfig {
  int n_pos = 1000;
  int n_neg = 1000;
  int histogram_bins = 20;

  bool operator==(const EvalConfig&) const = default;
};

/// Small recognition model trained for the generated-data augmentation table.
struct AugmentExperimentConfig {
  std::vector<double> fractions{0.2, 0.5, 1.0};
  int iterations = 800;
  int batch_size = 32;
  double lr = 2e-3;
  double generated_head_gradient_scale = 0.5;

  bool operator==(const AugmentExperimentConfig&) const = default;
};

struct TrainConfig {
  std::uint64_t seed = 1;  ///< root seed; every other stream derives from it
  LossWeights weights{};
  double base_lr = 8e-5;
  /// Empty means the default schedule scaled to total_iters.
  std::vector<std::int64_t> lr_milestones{};
  int batch_size = 16;
  std::int64_t total_iters = 5000;
  double ema_decay = 0.999;
  AdamConfig adam{};
  EquilibriumState equilibrium{};  ///< initial k values and update constants
  double centroid_beta = 0.95;
  bool beta_as_retention = false;
  IdentityLossOptions identity{};
  bool use_identity_pixel_loss = true;
  /// Drop L_G and L_G' from the generator objectives (test hook).
  bool detach_adversarial = false;
  ArchitectureConfig arch{};
  DataConfig data{};
  PretrainConfig pretrain{};
  EvalConfig eval{};
  AugmentExperimentConfig augment_exp{};
  int log_every = 100;         ///< progress lines on stderr; 0 disables
  int grid_every = 1000;       ///< sample grids when train() has an out_dir; 0 disables
  int checkpoint_every = 500;  ///< checkpoints when train() has an out_dir; 0 disables

  bool operator==(const TrainConfig&) const = default;
};

/// Iterations at which the learning rate halves for a 248K-iteration run.
inline const std::vector<std::int64_t> kReferenceMilestones{128000, 192000, 224000, 240000, 244000, 246000, 247000};
inline constexpr std::int64_t kReferenceTotalIters = 248000;

/// Milestones actually used: the explicit list, or the reference list scaled
/// by total_iters / 248K and forced strictly increasing.
std::vector<std::int64_t> resolved_milestones(const TrainConfig& config);

/// Throws ConfigError listing every offending key.
void validate(const TrainConfig& config);

NetworkSpec generator_spec(const TrainConfig& config);
NetworkSpec inverse_generator_spec(const TrainConfig& config);
NetworkSpec discriminator_spec(const TrainConfig& config);
NetworkSpec embedder_spec(const TrainConfig& config);

void to_json(nlohmann::json& j, const SubsetSpec& s);
void from_json(const nlohmann::json& j, SubsetSpec& s);
void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);
void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);
void to_json(nlohmann::json& j, const TrainConfig& c);
/// Partial documents are allowed: absent keys keep their current value.
/// Unknown keys raise ConfigError.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Applies a (possibly partial) JSON document on top of `base`.
TrainConfig merge_config(const TrainConfig& base, const nlohmann::json& overrides);
TrainConfig load_config(const std::filesystem::path& path, const TrainConfig& base = {});
std::string config_to_text(const TrainConfig& config);

std::string to_string(ExponentSign sign);
ExponentSign exponent_sign_from_string(const std::string& text);

}  // namespace morphgan
