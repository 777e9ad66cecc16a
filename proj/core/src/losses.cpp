#include "morphgan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <torch/torch.h>

#include "morphgan/error.hpp"

namespace morphgan {

void validate(const LossWeights& w) {
  if (!(w.lambda_cyc >= 0 && w.lambda_dp >= 0 && w.lambda_c >= 0 && w.lambda_id >= 0))
    throw ConfigError("loss weights must be nonnegative");
}

namespace {

torch::Tensor mean_l1(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) throw StructuralError(std::string(what) + ": shape mismatch");
  return (a - b).abs().mean();
}

}  // namespace

torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_cyc) { return mean_l1(x_cyc, x, "cycle_loss"); }

torch::Tensor began_gen_loss(const torch::Tensor& gen_out, const torch::Tensor& disc_recon) {
  return mean_l1(gen_out, disc_recon, "began_gen_loss");
}

torch::Tensor began_disc_loss(const torch::Tensor& real_err, const torch::Tensor& gen_loss, double k) {
  return real_err - k * gen_loss;
}

double began_disc_loss(double real_err, double gen_loss, double k) { return real_err - k * gen_loss; }

double update_k(double k_prev, double real_term, double gen_term, double rate, double gamma) {
  if (std::isnan(k_prev) || std::isnan(real_term) || std::isnan(gen_term) || std::isnan(rate) || std::isnan(gamma))
    throw NumericError("update_k: NaN input");
  return std::clamp(k_prev + rate * (gamma * real_term - gen_term), 0.0, 1.0);
}

torch::Tensor pair_disc_loss(const torch::Tensor& s, const torch::Tensor& inv_of_real, const torch::Tensor& cyc,
                             double k_dp) {
  return mean_l1(s, inv_of_real, "pair_disc_loss") - k_dp * cyc;
}

torch::Tensor identity_pixel_loss(const torch::Tensor& x, const torch::Tensor& gx) {
  return mean_l1(x, gx, "identity_pixel_loss");
}

// ---------------------------------------------------------------------------
// CentroidStore
// ---------------------------------------------------------------------------

CentroidStore::CentroidStore(int dim, double beta, bool beta_as_retention)
    : dim_(dim), beta_(beta), beta_as_retention_(beta_as_retention) {
  if (dim < 1) throw ArgumentError("CentroidStore: dim must be >= 1");
}

void CentroidStore::register_labels(std::span<const std::int64_t> labels) {
  for (auto l : labels)
    if (!entries_.contains(l)) entries_.emplace(l, Entry{std::vector<double>(static_cast<std::size_t>(dim_), 0.0), false});
}

const CentroidStore::Entry& CentroidStore::at(std::int64_t label) const {
  auto it = entries_.find(label);
  if (it == entries_.end()) throw StateError("CentroidStore: unknown label " + std::to_string(label));
  return it->second;
}

torch::Tensor CentroidStore::matrix(torch::ScalarType dtype) const {
  auto m = torch::empty({static_cast<std::int64_t>(entries_.size()), dim_}, torch::TensorOptions().dtype(torch::kDouble));
  auto acc = m.accessor<double, 2>();
  std::int64_t row = 0;
  for (const auto& [label, e] : entries_) {
    for (int d = 0; d < dim_; ++d) acc[row][d] = e.centroid[static_cast<std::size_t>(d)];
    ++row;
  }
  return m.to(dtype);
}

std::vector<std::int64_t> CentroidStore::labels() const {
  std::vector<std::int64_t> out;
  out.reserve(entries_.size());
  for (const auto& kv : entries_) out.push_back(kv.first);
  return out;
}

bool CentroidStore::all_finite() const {
  for (const auto& kv : entries_)
    for (double v : kv.second.centroid)
      if (!std::isfinite(v)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Identity losses
// ---------------------------------------------------------------------------

IdentityLossResult identity_set_loss(const torch::Tensor& embeddings, std::span<const std::int64_t> labels,
                                     const CentroidStore& store, const IdentityLossOptions& options) {
  if (embeddings.dim() != 2) throw StructuralError("identity_set_loss: embeddings must be [M, D]");
  const auto m = embeddings.size(0);
  if (m < 2) throw ArgumentError("identity_set_loss: batch size must be >= 2");
  if (static_cast<std::int64_t>(labels.size()) != m) throw StructuralError("identity_set_loss: label count mismatch");
  if (embeddings.size(1) != store.dim()) throw StructuralError("identity_set_loss: embedding dim mismatch");
  if (store.size() < 2) throw StateError("identity_set_loss: need at least 2 stored centroids");

  const auto store_labels = store.labels();
  std::vector<std::int64_t> own(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i) {
    auto it = std::lower_bound(store_labels.begin(), store_labels.end(), labels[static_cast<std::size_t>(i)]);
    if (it == store_labels.end() || *it != labels[static_cast<std::size_t>(i)])
      throw StateError("identity_set_loss: label " + std::to_string(labels[static_cast<std::size_t>(i)]) +
                       " has no centroid");
    own[static_cast<std::size_t>(i)] = it - store_labels.begin();
  }

  const auto centroids = store.matrix(embeddings.scalar_type());
  // d[i][j] = ||e_i - c_j||^2, [M, K]
  const auto diff = embeddings.unsqueeze(1) - centroids.unsqueeze(0);
  const auto d = diff.pow(2).sum(2);
  const auto own_idx = torch::from_blob(own.data(), {m}, torch::kLong).clone();
  const auto d_own = d.gather(1, own_idx.unsqueeze(1)).squeeze(1);

  auto sigma2 = (d_own.sum() / static_cast<double>(m - 1)).clamp_min(options.sigma_floor);
  if (options.sigma_stop_gradient) sigma2 = sigma2.detach();

  const double sign = options.sign == ExponentSign::magnet ? -1.0 : 1.0;
  const auto scaled = sign * d / (2.0 * sigma2);
  // Exclude each sample's own centroid from the denominator.
  const auto own_mask = torch::zeros_like(d, torch::TensorOptions().dtype(torch::kBool))
                            .scatter_(1, own_idx.unsqueeze(1), true);
  const auto others = scaled.masked_fill(own_mask, -std::numeric_limits<double>::infinity());
  const auto log_denominator = torch::logsumexp(others, {1});
  const auto log_numerator = scaled.gather(1, own_idx.unsqueeze(1)).squeeze(1) - options.eta;
  const auto loss = (log_denominator - log_numerator).sum();
  return {loss, sigma2.item<double>()};
}

CentroidStore update_centroids(const CentroidStore& store, const torch::Tensor& embeddings,
                               std::span<const std::int64_t> labels) {
  if (embeddings.dim() != 2 || embeddings.size(1) != store.dim())
    throw StructuralError("update_centroids: embedding dim does not match store");
  if (static_cast<std::int64_t>(labels.size()) != embeddings.size(0))
    throw StructuralError("update_centroids: label count mismatch");
  CentroidStore next = store;
  next.register_labels(labels);
  const auto e = embeddings.detach().to(torch::kDouble).contiguous();
  auto acc = e.accessor<double, 2>();
  const double beta = store.beta();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& entry = next.entries().at(labels[i]);
    for (int k = 0; k < store.dim(); ++k) {
      double& c = entry.centroid[static_cast<std::size_t>(k)];
      const double f = acc[static_cast<std::int64_t>(i)][k];
      c = store.beta_as_retention() ? beta * c + (1.0 - beta) * f : c - beta * (c - f);
    }
    entry.initialized = true;
  }
  return next;
}

}  // namespace morphgan
