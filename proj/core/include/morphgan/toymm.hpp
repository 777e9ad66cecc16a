#pragma once

// Procedural stand-in for a 3D morphable model plus the hidden "realism"
// transform that defines the target domain.
//
// Every function here is a pure function of its arguments and seeds.

#include <cstdint>
#include <string>
#include <vector>

#include "morphgan/image.hpp"

namespace morphgan {

/// Latent face description: identity, expression, pose and lighting.
struct MorphParams {
  std::vector<double> identity_coeffs;    ///< shared by every image of one identity
  std::vector<double> expression_coeffs;  ///< [0] smile, [1] eye openness
  double shear = 0.0;                     ///< yaw proxy, horizontal shear in [-1, 1]
  double roll = 0.0;                      ///< in-plane rotation, radians
  double light_angle = 0.0;               ///< light direction in the image plane, radians
  double light_strength = 0.0;            ///< [0, 1]
  std::int64_t identity_label = 0;

  bool operator==(const MorphParams&) const = default;

  /// Flat layout: identity | expression | shear roll angle strength | label.
  std::vector<double> flatten() const;
  static MorphParams unflatten(const std::vector<double>& flat, int d_id, int d_ex);
  static int flat_size(int d_id, int d_ex) { return d_id + d_ex + 5; }
};

/// Gaussians used for the per-image nuisance parameters.
struct NuisanceDistribution {
  double expression_sd = 0.7;
  double shear_sd = 0.25;
  double roll_sd = 0.1;
  double light_angle_sd = 1.5;
  double light_strength_mean = 0.35;
  double light_strength_sd = 0.2;

  bool operator==(const NuisanceDistribution&) const = default;
};

struct SamplingOptions {
  int d_id = 8;
  int d_ex = 2;
  std::int64_t first_label = 0;
  NuisanceDistribution nuisance{};
};

/// Draws num_ids * per_id parameter sets. Identity coefficients are drawn once
/// per identity from N(0, 1); nuisance parameters once per image.
std::vector<MorphParams> sample_params(std::uint64_t seed, int num_ids, int per_id,
                                       const SamplingOptions& options = {});

/// Rasterises the procedural face. size >= 16, channels in {1, 3}.
Image render_synthetic(const MorphParams& params, int size, int channels = 1);

/// Soft face-region mask in [0,1] for the same geometry render_synthetic uses.
Image render_face_mask(const MorphParams& params, int size);

/// The hidden target-domain transform T: tone curve, identity-keyed texture,
/// background composite and a 3x3 binomial blur. Deterministic; any
/// pseudo-randomness is keyed on a hash of the label and nuisance parameters.
Image realism_transform(const Image& image, const MorphParams& params);

/// Crop/rotate/flip parameters for one augmentation draw.
struct AugmentParams {
  int crop = 0;
  int offset_x = 0;
  int offset_y = 0;
  double angle = 0.0;  ///< radians, |angle| <= 10 degrees
  bool flip = false;
};

/// Crop side for the embedder, input * 96 / 108 (108 -> 96, 32 -> 28, 64 -> 56).
int default_crop_size(int input_size);

AugmentParams draw_augment(std::uint64_t seed, int input_size, int crop);
AugmentParams center_crop_params(int input_size, int crop);

/// Bilinear resampling with zero fill outside the source.
Image apply_augment(const Image& image, const AugmentParams& params);

/// Random crop (default 96/108 of the input side), rotation within +-10
/// degrees and horizontal flip with probability 0.5.
Image augment(const Image& image, std::uint64_t seed, int crop = 0);

/// Identity-label range and per-identity image count for one dataset split.
struct SubsetSpec {
  std::int64_t first_id = 0;
  int num_ids = 0;
  int per_id = 0;

  std::int64_t end_id() const { return first_id + num_ids; }
  std::int64_t count() const { return static_cast<std::int64_t>(num_ids) * per_id; }
  bool operator==(const SubsetSpec&) const = default;
};

struct DataConfig {
  std::uint64_t seed = 1;
  int image_size = 32;
  int channels = 1;
  int d_id = 8;
  int d_ex = 2;
  SubsetSpec synthetic{0, 200, 20};
  SubsetSpec real{200, 200, 20};
  SubsetSpec paired{400, 100, 1};
  SubsetSpec heldout{500, 50, 10};
  SubsetSpec pretrain{550, 300, 10};   ///< embedder pretraining identities (toy-real)
  SubsetSpec generated{900, 200, 10};  ///< fresh identities rendered for the augmentation experiment
  NuisanceDistribution nuisance{};

  bool operator==(const DataConfig&) const = default;
};

/// Throws ConfigError on overlapping identity ranges or bad sizes.
void validate(const DataConfig& config);

struct SyntheticSample {
  MorphParams params;
  Image image;
};

struct RealSample {
  std::int64_t label = 0;
  Image image;
};

/// A synthetic render together with its exact target-domain counterpart.
struct RenderedPair {
  MorphParams params;
  Image synthetic;
  Image real;
};

struct DatasetBundle {
  DataConfig config;
  std::vector<SyntheticSample> unpaired_synthetic;
  std::vector<RealSample> unpaired_real;
  std::vector<RenderedPair> paired;
  std::vector<RenderedPair> heldout;
  std::vector<RealSample> pretrain_real;

  bool operator==(const DatasetBundle&) const;
};

SamplingOptions sampling_options(const DataConfig& config, const SubsetSpec& subset);

/// Parameters of one split, reproducible from the config alone.
std::vector<MorphParams> subset_params(const DataConfig& config, const SubsetSpec& subset,
                                       std::uint64_t stream);

DatasetBundle build_datasets(const DataConfig& config);

/// Throws DataError when any DatasetBundle invariant is violated.
void check_invariants(const DatasetBundle& bundle);

/// Stable fingerprint of the data configuration (hex string).
std::string fingerprint(const DataConfig& config);

}  // namespace morphgan
