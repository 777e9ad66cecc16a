#pragma once

// Functional networks over named weight sets.
//
// A network is a NetworkSpec (architecture hyper-parameters) plus a WeightSet
// (named tensors). Forward passes are pure functions of (spec, weights,
// input, seed); gradients come from torch autograd when the weight tensors
// require grad.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <torch/types.h>

#include "morphgan/image.hpp"
#include "morphgan/toymm.hpp"

namespace morphgan {

enum class NetKind { generator, inverse_generator, autoencoder_discriminator, embedder };
enum class Mode { train, eval };

std::string_view to_string(NetKind kind);
NetKind net_kind_from_string(std::string_view name);

struct NetworkSpec {
  NetKind kind = NetKind::generator;
  int channels = 1;             ///< image channels (1 or 3)
  int input_size = 32;          ///< square input side
  int base_channels = 8;
  int num_residual_blocks = 3;  ///< generators
  bool use_skip = true;         ///< generators: input->output and encoder->decoder skips
  double dropout_keep = 0.9;    ///< generator kind, train mode only
  int embedding_dim = 32;       ///< embedder
  int bottleneck = 64;          ///< autoencoder code size
  int depth = 2;                ///< autoencoder downsampling levels

  bool operator==(const NetworkSpec&) const = default;
};

/// Throws StructuralError if the spec cannot be realised (odd sizes etc.).
void validate(const NetworkSpec& spec);

/// Ordered named tensors. Treated as an immutable value: updates build a new
/// WeightSet with a bumped version.
class WeightSet {
 public:
  using Entry = std::pair<std::string, torch::Tensor>;

  WeightSet() = default;
  explicit WeightSet(std::vector<Entry> entries, std::uint64_t version = 0);

  const torch::Tensor& operator[](std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<torch::Tensor> tensors() const;
  std::size_t size() const { return entries_.size(); }
  std::uint64_t version() const { return version_; }
  std::int64_t parameter_count() const;

  /// Same names, new tensors, version + 1.
  WeightSet with_tensors(std::vector<torch::Tensor> tensors) const;
  WeightSet with_version(std::uint64_t version) const;
  WeightSet detached() const;
  /// Leaf copies with requires_grad set, for building a differentiable graph.
  WeightSet requiring_grad() const;
  WeightSet to(torch::ScalarType dtype) const;

  bool all_finite() const;
  bool bitwise_equal(const WeightSet& other) const;

 private:
  std::vector<Entry> entries_;
  std::uint64_t version_ = 0;
};

struct ParamShape {
  std::string name;
  std::vector<std::int64_t> shape;
};

/// Names and shapes of every tensor the architecture uses, in a fixed order.
std::vector<ParamShape> parameter_layout(const NetworkSpec& spec);

/// Seeded initialisation (He-uniform weights, zero biases). Generators start
/// close to sigmoid(4x - 2) through the skip path.
WeightSet init_weights(const NetworkSpec& spec, std::uint64_t seed,
                       torch::ScalarType dtype = torch::kFloat);

/// Throws StructuralError when names or shapes disagree with the layout.
void check_weights(const NetworkSpec& spec, const WeightSet& weights);

/// Generator / inverse generator: ResNet with one downsampling level,
/// residual blocks (dropout after each block for kind generator in train
/// mode), one upsampling level, sigmoid output. Output shape == input shape.
torch::Tensor generator_forward(const NetworkSpec& spec, const WeightSet& w, const torch::Tensor& x, Mode mode,
                                std::uint64_t seed);
ImageBatch generator_forward(const NetworkSpec& spec, const WeightSet& w, const ImageBatch& x, Mode mode,
                             std::uint64_t seed);

/// BEGAN-style autoencoder: strided conv encoder, linear bottleneck, nearest
/// upsampling decoder, sigmoid output.
torch::Tensor autoencode(const NetworkSpec& spec, const WeightSet& w, const torch::Tensor& x);
ImageBatch autoencode(const NetworkSpec& spec, const WeightSet& w, const ImageBatch& x);

/// Three strided convolutions and a linear projection; rows L2-normalised.
torch::Tensor embed(const NetworkSpec& spec, const WeightSet& w, const torch::Tensor& x);

/// Differentiable counterpart of apply_augment (bilinear, zero fill).
torch::Tensor augment_batch(const torch::Tensor& x, std::span<const AugmentParams> params);

/// Central crop, exact copy.
torch::Tensor center_crop(const torch::Tensor& x, int crop);

}  // namespace morphgan
