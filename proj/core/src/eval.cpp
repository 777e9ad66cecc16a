#include "morphgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "morphgan/error.hpp"
#include "morphgan/rng.hpp"
#include "morphgan/trainer.hpp"

namespace morphgan {

using nlohmann::json;

namespace {

using IndexPair = std::pair<std::size_t, std::size_t>;

IndexPair ordered(std::size_t a, std::size_t b) { return a < b ? IndexPair{a, b} : IndexPair{b, a}; }

template <typename T>
void shuffle_in_place(std::vector<T>& v, Engine& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Pairs and EER
// ---------------------------------------------------------------------------

std::vector<VerificationPair> build_verification_pairs(std::span<const std::int64_t> labels, int n_pos, int n_neg,
                                                       std::uint64_t seed) {
  if (n_pos < 0 || n_neg < 0) throw ArgumentError("build_verification_pairs: negative pair count");
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  std::vector<const std::vector<std::size_t>*> multi;
  std::uint64_t possible_pos = 0;
  for (const auto& [label, idx] : groups) {
    if (idx.size() >= 2) multi.push_back(&idx);
    possible_pos += idx.size() * (idx.size() - 1) / 2;
  }
  if (groups.size() < 2 || multi.size() < 2)
    throw DataError("build_verification_pairs: need >= 2 images for >= 2 identities");
  const std::uint64_t n = labels.size();
  const std::uint64_t possible_neg = n * (n - 1) / 2 - possible_pos;
  if (static_cast<std::uint64_t>(n_pos) > possible_pos || static_cast<std::uint64_t>(n_neg) > possible_neg)
    throw DataError("build_verification_pairs: not enough distinct pairs for the requested counts");

  Engine rng(seed);
  std::vector<VerificationPair> out;
  out.reserve(static_cast<std::size_t>(n_pos + n_neg));

  if (possible_pos <= 4 * static_cast<std::uint64_t>(n_pos)) {
    std::vector<IndexPair> all;
    for (const auto* idx : multi)
      for (std::size_t i = 0; i < idx->size(); ++i)
        for (std::size_t j = i + 1; j < idx->size(); ++j) all.emplace_back((*idx)[i], (*idx)[j]);
    shuffle_in_place(all, rng);
    for (int k = 0; k < n_pos; ++k) out.push_back({all[static_cast<std::size_t>(k)].first, all[static_cast<std::size_t>(k)].second, true});
  } else {
    std::set<IndexPair> seen;
    std::uniform_int_distribution<std::size_t> pick_group(0, multi.size() - 1);
    while (static_cast<int>(seen.size()) < n_pos) {
      const auto& idx = *multi[pick_group(rng)];
      std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
      const auto a = pick(rng), b = pick(rng);
      if (a == b) continue;
      const auto p = ordered(idx[a], idx[b]);
      if (seen.insert(p).second) out.push_back({p.first, p.second, true});
    }
  }

  if (possible_neg <= 4 * static_cast<std::uint64_t>(n_neg)) {
    std::vector<IndexPair> all;
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t j = i + 1; j < labels.size(); ++j)
        if (labels[i] != labels[j]) all.emplace_back(i, j);
    shuffle_in_place(all, rng);
    for (int k = 0; k < n_neg; ++k) out.push_back({all[static_cast<std::size_t>(k)].first, all[static_cast<std::size_t>(k)].second, false});
  } else {
    std::set<IndexPair> seen;
    std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
    while (static_cast<int>(seen.size()) < n_neg) {
      const auto a = pick(rng), b = pick(rng);
      if (labels[a] == labels[b]) continue;
      const auto p = ordered(a, b);
      if (seen.insert(p).second) out.push_back({p.first, p.second, false});
    }
  }
  return out;
}

EerResult compute_eer(std::span<const double> distances, const std::vector<bool>& same) {
  if (distances.size() != same.size()) throw ArgumentError("compute_eer: length mismatch");
  const auto n_pos = static_cast<std::size_t>(std::count(same.begin(), same.end(), true));
  const auto n_neg = same.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("compute_eer: need at least one pair of each class");
  for (double d : distances)
    if (!std::isfinite(d)) throw ArgumentError("compute_eer: non-finite distance");

  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });

  // State s accepts every pair in the first s groups of equal distance.
  std::vector<double> far{0.0}, frr{1.0}, thr{distances[order.front()] - 1.0};
  std::vector<double> acc{static_cast<double>(n_neg) / static_cast<double>(same.size())};
  std::size_t pos_acc = 0, neg_acc = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double d = distances[order[i]];
    while (i < order.size() && distances[order[i]] == d) {
      (same[order[i]] ? pos_acc : neg_acc) += 1;
      ++i;
    }
    far.push_back(static_cast<double>(neg_acc) / static_cast<double>(n_neg));
    frr.push_back(static_cast<double>(n_pos - pos_acc) / static_cast<double>(n_pos));
    acc.push_back(static_cast<double>(pos_acc + (n_neg - neg_acc)) / static_cast<double>(same.size()));
    thr.push_back(i < order.size() ? 0.5 * (d + distances[order[i]]) : d + 1.0);
  }

  EerResult r;
  const auto best = static_cast<std::size_t>(std::max_element(acc.begin(), acc.end()) - acc.begin());
  r.best_accuracy = acc[best];
  r.best_threshold = thr[best];
  for (std::size_t s = 1; s < far.size(); ++s) {
    const double diff = far[s] - frr[s];
    if (diff < 0) continue;
    if (diff == 0) {
      r.eer = far[s];
    } else {
      const double prev = far[s - 1] - frr[s - 1];
      const double t = -prev / (diff - prev);
      r.eer = far[s - 1] + t * (far[s] - far[s - 1]);
    }
    break;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Embedding distances and histograms
// ---------------------------------------------------------------------------

torch::Tensor embed_images(const NetworkSpec& spec, const WeightSet& embedder, std::span<const Image> images,
                           int batch) {
  if (images.empty()) throw DataError("embed_images: no images");
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch)) {
    const auto count = std::min(images.size() - start, static_cast<std::size_t>(batch));
    const auto x = to_tensor(images.subspan(start, count));
    parts.push_back(embed(spec, embedder, center_crop(x, spec.input_size)));
  }
  return torch::cat(parts, 0);
}

std::vector<double> pair_distances(const torch::Tensor& embeddings, std::span<const VerificationPair> pairs) {
  const auto e = embeddings.detach().to(torch::kDouble).contiguous();
  const auto acc = e.accessor<double, 2>();
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (static_cast<std::int64_t>(std::max(p.a, p.b)) >= e.size(0)) throw ArgumentError("pair_distances: index out of range");
    double s = 0.0;
    for (std::int64_t k = 0; k < e.size(1); ++k) {
      const double d = acc[static_cast<std::int64_t>(p.a)][k] - acc[static_cast<std::int64_t>(p.b)][k];
      s += d * d;
    }
    out.push_back(std::sqrt(s));
  }
  return out;
}

std::string DistanceHistogram::to_csv() const {
  std::ostringstream os;
  os << "bin_left,bin_right,pos_count,neg_count\n";
  for (int i = 0; i < bins(); ++i)
    os << bin_left(i) << ',' << bin_right(i) << ',' << pos[static_cast<std::size_t>(i)] << ','
       << neg[static_cast<std::size_t>(i)] << '\n';
  return os.str();
}

DistanceHistogram histogram_from_distances(std::span<const double> distances, const std::vector<bool>& same, int bins,
                                           double lo, double hi) {
  if (bins < 1) throw ArgumentError("distance_histogram: bins must be >= 1");
  if (!(hi > lo)) throw ArgumentError("distance_histogram: empty range");
  if (distances.size() != same.size()) throw ArgumentError("distance_histogram: length mismatch");
  DistanceHistogram h;
  h.lo = lo;
  h.hi = hi;
  h.pos.assign(static_cast<std::size_t>(bins), 0);
  h.neg.assign(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < distances.size(); ++i) {
    auto b = static_cast<long>(std::floor((distances[i] - lo) / (hi - lo) * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    (same[i] ? h.pos : h.neg)[static_cast<std::size_t>(b)] += 1;
  }
  return h;
}

DistanceHistogram distance_histogram(std::span<const VerificationPair> pairs, std::span<const Image> images,
                                     const NetworkSpec& spec, const WeightSet& embedder, int bins) {
  if (pairs.empty()) throw ArgumentError("distance_histogram: no pairs");
  if (bins < 1) throw ArgumentError("distance_histogram: bins must be >= 1");
  const auto d = pair_distances(embed_images(spec, embedder, images), pairs);
  std::vector<bool> same;
  for (const auto& p : pairs) same.push_back(p.same);
  return histogram_from_distances(d, same, bins);
}

// ---------------------------------------------------------------------------
// Fidelity and translation
// ---------------------------------------------------------------------------

double oracle_fidelity(std::span<const RenderedPair> heldout, const Mapper& map, int batch) {
  if (heldout.empty()) throw DataError("oracle_fidelity: empty held-out set");
  if (batch < 1) throw ArgumentError("oracle_fidelity: batch must be >= 1");
  torch::NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t start = 0; start < heldout.size(); start += static_cast<std::size_t>(batch)) {
    const auto count = std::min(heldout.size() - start, static_cast<std::size_t>(batch));
    std::vector<const Image*> xs, ts;
    for (std::size_t i = start; i < start + count; ++i) {
      xs.push_back(&heldout[i].synthetic);
      ts.push_back(&heldout[i].real);
    }
    const auto out = map(to_tensor(std::span<const Image* const>(xs)));
    const auto target = to_tensor(std::span<const Image* const>(ts));
    if (!out.sizes().equals(target.sizes())) throw StructuralError("oracle_fidelity: mapper changed the shape");
    const auto per_image = (out.to(torch::kDouble) - target.to(torch::kDouble)).abs().flatten(1).mean(1).contiguous();
    const auto acc = per_image.accessor<double, 1>();
    for (std::int64_t i = 0; i < per_image.size(0); ++i) total += acc[i];
  }
  return total / static_cast<double>(heldout.size());
}

double oracle_fidelity(const NetworkSpec& spec, const WeightSet& generator, std::span<const RenderedPair> heldout) {
  return oracle_fidelity(heldout,
                         [&](const torch::Tensor& x) { return generator_forward(spec, generator, x, Mode::eval, 0); });
}

std::vector<Image> translate_images(const NetworkSpec& spec, const WeightSet& generator, std::span<const Image> images,
                                    int batch) {
  torch::NoGradGuard no_grad;
  std::vector<Image> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch)) {
    const auto count = std::min(images.size() - start, static_cast<std::size_t>(batch));
    const auto y = generator_forward(spec, generator, to_tensor(images.subspan(start, count)), Mode::eval, 0);
    for (auto& img : images_from_tensor(y)) out.push_back(std::move(img));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

VerificationResult verify(std::span<const Image> images, std::span<const std::int64_t> labels,
                          const NetworkSpec& spec, const WeightSet& embedder, const EvalConfig& eval,
                          std::uint64_t seed) {
  if (images.size() != labels.size()) throw ArgumentError("verify: image/label count mismatch");
  const auto pairs = build_verification_pairs(labels, eval.n_pos, eval.n_neg, seed);
  const auto d = pair_distances(embed_images(spec, embedder, images), pairs);
  std::vector<bool> same;
  for (const auto& p : pairs) same.push_back(p.same);
  return {compute_eer(d, same), histogram_from_distances(d, same, eval.histogram_bins)};
}

json EvalReport::to_json() const {
  json hist = json::array();
  for (int i = 0; i < histogram.bins(); ++i)
    hist.push_back({{"bin_left", histogram.bin_left(i)},
                    {"bin_right", histogram.bin_right(i)},
                    {"pos_count", histogram.pos[static_cast<std::size_t>(i)]},
                    {"neg_count", histogram.neg[static_cast<std::size_t>(i)]}});
  return {{"accuracy", accuracy},
          {"one_minus_eer", one_minus_eer},
          {"oracle_fidelity", oracle_fidelity},
          {"histogram", hist},
          {"fingerprint", fingerprint}};
}

namespace {

EvalReport report_for(const TrainConfig& config, std::span<const Image> images, std::span<const std::int64_t> labels,
                      const WeightSet& embedder) {
  const auto v = verify(images, labels, embedder_spec(config), embedder, config.eval,
                        derive_seed(config.seed, "eval/pairs"));
  EvalReport r;
  r.accuracy = v.eer.best_accuracy;
  r.one_minus_eer = 1.0 - v.eer.eer;
  r.histogram = v.histogram;
  r.fingerprint = fingerprint(config.data);
  return r;
}

std::pair<std::vector<Image>, std::vector<std::int64_t>> heldout_synthetic(const DatasetBundle& bundle) {
  std::vector<Image> images;
  std::vector<std::int64_t> labels;
  for (const auto& p : bundle.heldout) {
    images.push_back(p.synthetic);
    labels.push_back(p.params.identity_label);
  }
  return {std::move(images), std::move(labels)};
}

}  // namespace

EvalReport evaluate(const TrainConfig& config, const DatasetBundle& bundle, const WeightSet& generator,
                    const WeightSet& embedder) {
  const auto gspec = generator_spec(config);
  const auto [synthetic, labels] = heldout_synthetic(bundle);
  const auto generated = translate_images(gspec, generator, synthetic);
  auto r = report_for(config, generated, labels, embedder);
  r.oracle_fidelity = oracle_fidelity(gspec, generator, bundle.heldout);
  return r;
}

EvalReport evaluate_synthetic_baseline(const TrainConfig& config, const DatasetBundle& bundle,
                                       const WeightSet& embedder) {
  const auto [synthetic, labels] = heldout_synthetic(bundle);
  auto r = report_for(config, synthetic, labels, embedder);
  r.oracle_fidelity = oracle_fidelity(bundle.heldout, [](const torch::Tensor& x) { return x; });
  return r;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

std::vector<AblationRow> run_ablation(const TrainConfig& base, const DatasetBundle& bundle, const WeightSet& embedder,
                                      const std::function<void(const AblationRow&)>& on_row) {
  validate(base);
  std::vector<AblationRow> rows;
  for (std::size_t v = 0; v < kAblationNames.size(); ++v) {
    AblationRow row;
    row.name = kAblationNames[v];
    auto cfg = base;
    if (v == 1) cfg.weights.lambda_c = 0.0;
    if (v == 2) cfg.weights.lambda_dp = 0.0;
    if (v == 3) cfg.weights.lambda_cyc = 0.0;
    row.weights = cfg.weights;
    try {
      const auto result = train(cfg, bundle, embedder);
      row.report = evaluate(cfg, bundle, result.state.ema_g, embedder);
    } catch (const Error& e) {
      row.error = e.what();
    }
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-22s %10s %10s %12s\n", "variant", "accuracy", "1-EER", "fidelity");
  os << line;
  for (const auto& r : rows) {
    if (r.report) {
      std::snprintf(line, sizeof(line), "%-22s %10.4f %10.4f %12.5f\n", r.name.c_str(), r.report->accuracy,
                    r.report->one_minus_eer, r.report->oracle_fidelity);
    } else {
      std::snprintf(line, sizeof(line), "%-22s  failed: %s\n", r.name.c_str(), r.error.substr(0, 100).c_str());
    }
    os << line;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Augmentation experiment
// ---------------------------------------------------------------------------

GeneratedSet generate_faces(const TrainConfig& config, const WeightSet& generator) {
  const auto& d = config.data;
  const auto params = subset_params(d, d.generated, 6);
  std::vector<Image> renders;
  GeneratedSet out;
  for (const auto& p : params) {
    renders.push_back(render_synthetic(p, d.image_size, d.channels));
    out.labels.push_back(p.identity_label);
  }
  out.images = translate_images(generator_spec(config), generator, renders);
  return out;
}

json AugmentationCell::to_json() const {
  return {{"fraction", fraction},
          {"augmented", augmented},
          {"real_identities", real_identities},
          {"accuracy", accuracy},
          {"one_minus_eer", one_minus_eer}};
}

std::vector<AugmentationCell> augmentation_experiment(std::span<const double> fractions, const GeneratedSet& generated,
                                                      const TrainConfig& config, const DatasetBundle& bundle) {
  if (fractions.empty()) throw ConfigError("augment_exp.fractions: empty");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("augment_exp.fractions: values must lie in (0, 1]");
  if (generated.images.empty() || generated.images.size() != generated.labels.size())
    throw ConfigError("augmentation_experiment: empty generated set");

  std::map<std::int64_t, std::vector<const Image*>> by_id;
  for (const auto& r : bundle.unpaired_real) by_id[r.label].push_back(&r.image);

  std::vector<Image> test_images;
  std::vector<std::int64_t> test_labels;
  for (const auto& p : bundle.heldout) {
    test_images.push_back(p.real);
    test_labels.push_back(p.params.identity_label);
  }

  ClassificationSet gen_set;
  for (std::size_t i = 0; i < generated.images.size(); ++i) {
    gen_set.images.push_back(&generated.images[i]);
    gen_set.labels.push_back(generated.labels[i]);
  }
  gen_set.loss_weight = config.augment_exp.generated_head_gradient_scale;

  const auto& ae = config.augment_exp;
  PretrainConfig schedule{ae.iterations, ae.batch_size, ae.lr, config.pretrain.logit_scale};
  const auto spec = embedder_spec(config);

  std::vector<AugmentationCell> cells;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    const double f = fractions[fi];
    const auto n_ids = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(f * static_cast<double>(by_id.size()))));
    ClassificationSet real_set;
    std::size_t taken = 0;
    for (const auto& [label, imgs] : by_id) {
      if (taken++ == n_ids) break;
      for (const auto* img : imgs) {
        real_set.images.push_back(img);
        real_set.labels.push_back(label);
      }
    }
    const auto seed = derive_seed(config.seed, {0x6175676dULL, fi});
    for (bool augmented : {false, true}) {
      std::vector<ClassificationSet> sets{real_set};
      if (augmented) sets.push_back(gen_set);
      const auto trunk = train_classifier(spec, sets, schedule, config.adam, seed);
      const auto v = verify(test_images, test_labels, spec, trunk, config.eval,
                            derive_seed(config.seed, "augment-exp/pairs"));
      AugmentationCell c;
      c.fraction = f;
      c.augmented = augmented;
      c.real_identities = static_cast<int>(std::min(n_ids, by_id.size()));
      c.accuracy = v.eer.best_accuracy;
      c.one_minus_eer = 1.0 - v.eer.eer;
      cells.push_back(c);
    }
  }
  return cells;
}

std::string augmentation_table(std::span<const AugmentationCell> cells) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-9s %-10s %6s %10s %10s\n", "fraction", "augmented", "ids", "accuracy", "1-EER");
  os << line;
  for (const auto& c : cells) {
    std::snprintf(line, sizeof(line), "%-9.2f %-10s %6d %10.4f %10.4f\n", c.fraction, c.augmented ? "yes" : "no",
                  c.real_identities, c.accuracy, c.one_minus_eer);
    os << line;
  }
  return os.str();
}

}  // namespace morphgan
