#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/types.h>

#include "morphgan/config.hpp"
#include "morphgan/nets.hpp"
#include "morphgan/toymm.hpp"

namespace morphgan {

/// Indices into a labelled image list.
struct VerificationPair {
  std::size_t a = 0;
  std::size_t b = 0;
  bool same = false;

  bool operator==(const VerificationPair&) const = default;
};

/// Exactly n_pos same-label and n_neg different-label unordered pairs, no
/// duplicates, deterministic in seed. Throws DataError when the labels cannot
/// supply that many distinct pairs.
std::vector<VerificationPair> build_verification_pairs(std::span<const std::int64_t> labels, int n_pos, int n_neg,
                                                       std::uint64_t seed);

struct EerResult {
  double eer = 0.0;
  double best_accuracy = 0.0;
  double best_threshold = 0.0;
};

/// A pair is accepted as "same" when distance <= threshold. Thresholds are
/// every midpoint between consecutive distinct distances plus both extremes.
/// The EER is interpolated linearly where FAR - FRR changes sign.
EerResult compute_eer(std::span<const double> distances, const std::vector<bool>& same);

/// Unit embeddings of centre-cropped images, [N, D].
torch::Tensor embed_images(const NetworkSpec& spec, const WeightSet& embedder, std::span<const Image> images,
                           int batch = 128);

/// L2 embedding distance for every pair.
std::vector<double> pair_distances(const torch::Tensor& embeddings, std::span<const VerificationPair> pairs);

struct DistanceHistogram {
  double lo = 0.0;
  double hi = 2.0;
  std::vector<std::int64_t> pos;
  std::vector<std::int64_t> neg;

  int bins() const { return static_cast<int>(pos.size()); }
  double bin_left(int i) const { return lo + (hi - lo) * i / bins(); }
  double bin_right(int i) const { return lo + (hi - lo) * (i + 1) / bins(); }
  std::string to_csv() const;
  bool operator==(const DistanceHistogram&) const = default;
};

/// Counts over [lo, hi]; the last bin is closed and values outside clamp.
DistanceHistogram histogram_from_distances(std::span<const double> distances, const std::vector<bool>& same, int bins,
                                           double lo = 0.0, double hi = 2.0);

DistanceHistogram distance_histogram(std::span<const VerificationPair> pairs, std::span<const Image> images,
                                     const NetworkSpec& spec, const WeightSet& embedder, int bins);

/// Mapping under test: NCHW batch in, NCHW batch out.
using Mapper = std::function<torch::Tensor(const torch::Tensor&)>;

/// mean over held-out pairs of mean |map(synthetic) - real|.
double oracle_fidelity(std::span<const RenderedPair> heldout, const Mapper& map, int batch = 64);
double oracle_fidelity(const NetworkSpec& spec, const WeightSet& generator, std::span<const RenderedPair> heldout);

/// Eval-mode translation of every image.
std::vector<Image> translate_images(const NetworkSpec& spec, const WeightSet& generator, std::span<const Image> images,
                                    int batch = 128);

struct VerificationResult {
  EerResult eer;
  DistanceHistogram histogram;
};

/// Pairs from `labels`, distances in the embedder, EER and histogram.
VerificationResult verify(std::span<const Image> images, std::span<const std::int64_t> labels,
                          const NetworkSpec& spec, const WeightSet& embedder, const EvalConfig& eval,
                          std::uint64_t seed);

struct EvalReport {
  double accuracy = 0.0;
  double one_minus_eer = 0.0;
  double oracle_fidelity = 0.0;
  DistanceHistogram histogram;
  std::string fingerprint;

  nlohmann::json to_json() const;
};

/// Verification on translated held-out renders plus oracle fidelity.
EvalReport evaluate(const TrainConfig& config, const DatasetBundle& bundle, const WeightSet& generator,
                    const WeightSet& embedder);

/// Same verification protocol on the raw held-out synthetic renders.
EvalReport evaluate_synthetic_baseline(const TrainConfig& config, const DatasetBundle& bundle,
                                       const WeightSet& embedder);

struct AblationRow {
  std::string name;
  LossWeights weights;
  std::optional<EvalReport> report;
  std::string error;  ///< set when the variant failed to train
};

inline const std::vector<std::string> kAblationNames{"Ours", "Ours without L_C", "Ours without L_DP",
                                                     "Ours without L_cyc"};

/// Trains and evaluates the full model and the three single-term ablations
/// from identical seeds. Training failures are recorded per row.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const DatasetBundle& bundle, const WeightSet& embedder,
                                      const std::function<void(const AblationRow&)>& on_row = {});

std::string ablation_table(std::span<const AblationRow> rows);

/// Generated identities: fresh synthetic renders translated by G.
struct GeneratedSet {
  std::vector<Image> images;
  std::vector<std::int64_t> labels;
};

GeneratedSet generate_faces(const TrainConfig& config, const WeightSet& generator);

struct AugmentationCell {
  double fraction = 0.0;
  bool augmented = false;
  int real_identities = 0;
  double accuracy = 0.0;
  double one_minus_eer = 0.0;

  nlohmann::json to_json() const;
};

/// Recognition models over {fraction of toy-real identities} x {with, without
/// generated identities}; verification on held-out real images.
std::vector<AugmentationCell> augmentation_experiment(std::span<const double> fractions, const GeneratedSet& generated,
                                                      const TrainConfig& config, const DatasetBundle& bundle);

std::string augmentation_table(std::span<const AugmentationCell> cells);

}  // namespace morphgan
