#pragma once

// Scalar training objectives and the two controllers (boundary-equilibrium
// balance terms and identity centroids).
//
// All L1 terms are means over every element, so loss weights do not depend on
// image size.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <torch/types.h>

namespace morphgan {

struct LossWeights {
  double lambda_cyc = 0.5;
  double lambda_dp = 0.5;
  double lambda_c = 0.001;
  double lambda_id = 0.1;

  bool operator==(const LossWeights&) const = default;
};

/// Throws ConfigError for negative weights.
void validate(const LossWeights& weights);

/// Balance terms for the three autoencoder games (D_R, D_S and the pair game).
struct EquilibriumState {
  double k_dr = 0.0;
  double k_ds = 0.0;
  double k_dp = 0.0;
  double rate = 0.001;
  double gamma = 0.5;

  bool operator==(const EquilibriumState&) const = default;
};

/// mean |x_cyc - x|
torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_cyc);

/// mean |G(x) - D(G(x))|
torch::Tensor began_gen_loss(const torch::Tensor& gen_out, const torch::Tensor& disc_recon);

/// real_err - k * gen_loss
torch::Tensor began_disc_loss(const torch::Tensor& real_err, const torch::Tensor& gen_loss, double k);
double began_disc_loss(double real_err, double gen_loss, double k);

/// clamp(k_prev + rate * (gamma * real_term - gen_term), 0, 1)
double update_k(double k_prev, double real_term, double gen_term, double rate = 0.001, double gamma = 0.5);

/// mean |s - G'(r)| - k_dp * cyc
torch::Tensor pair_disc_loss(const torch::Tensor& s, const torch::Tensor& inv_of_real, const torch::Tensor& cyc,
                             double k_dp);

/// mean |x - G(x)|
torch::Tensor identity_pixel_loss(const torch::Tensor& x, const torch::Tensor& gx);

/// Per-identity embedding centroids. Registered identities start at zero.
class CentroidStore {
 public:
  struct Entry {
    std::vector<double> centroid;
    bool initialized = false;
    bool operator==(const Entry&) const = default;
  };

  CentroidStore() = default;
  CentroidStore(int dim, double beta = 0.95, bool beta_as_retention = false);

  /// Adds zero centroids for labels not yet present.
  void register_labels(std::span<const std::int64_t> labels);

  int dim() const { return dim_; }
  double beta() const { return beta_; }
  bool beta_as_retention() const { return beta_as_retention_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(std::int64_t label) const { return entries_.contains(label); }
  const Entry& at(std::int64_t label) const;
  const std::map<std::int64_t, Entry>& entries() const { return entries_; }
  std::map<std::int64_t, Entry>& entries() { return entries_; }

  /// [K, dim] tensor of centroids in label order, plus the label order.
  torch::Tensor matrix(torch::ScalarType dtype = torch::kDouble) const;
  std::vector<std::int64_t> labels() const;

  bool all_finite() const;
  bool operator==(const CentroidStore&) const = default;

 private:
  int dim_ = 0;
  double beta_ = 0.95;
  bool beta_as_retention_ = false;
  std::map<std::int64_t, Entry> entries_;
};

enum class ExponentSign {
  magnet,      ///< exp(-d / 2 sigma^2): pulls samples to their own centroid
  as_printed,  ///< exp(+d / 2 sigma^2)
};

struct IdentityLossOptions {
  double eta = 1.0;
  ExponentSign sign = ExponentSign::magnet;
  double sigma_floor = 1e-6;
  bool sigma_stop_gradient = true;

  bool operator==(const IdentityLossOptions&) const = default;
};

struct IdentityLossResult {
  torch::Tensor loss;  ///< scalar, summed over the batch
  double sigma2 = 0.0;
};

/// Set-based identity loss over unit embeddings [M, D]:
///   sum_i  -log( exp(s d_ii / 2 sigma^2 - eta) / sum_{j != i_x} exp(s d_ij / 2 sigma^2) )
/// with d_ij = ||e_i - c_j||^2, sigma^2 = max(sum_i d_ii / (M - 1), floor) and
/// s = -1 (magnet) or +1 (as printed). j ranges over every stored centroid.
IdentityLossResult identity_set_loss(const torch::Tensor& embeddings, std::span<const std::int64_t> labels,
                                     const CentroidStore& store, const IdentityLossOptions& options = {});

/// Sequential (batch order) centroid update
///   c_j <- c_j - beta * (c_j - f)          (default)
///   c_j <- beta * c_j + (1 - beta) * f     (beta_as_retention)
/// for each embedding f with label j. Unknown labels are registered first.
CentroidStore update_centroids(const CentroidStore& store, const torch::Tensor& embeddings,
                               std::span<const std::int64_t> labels);

}  // namespace morphgan
