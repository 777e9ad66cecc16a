#include "morphgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <set>

#include <ATen/CPUGeneratorImpl.h>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "morphgan/grids.hpp"
#include "morphgan/rng.hpp"

namespace morphgan {

using nlohmann::json;

namespace {

bool tensors_bitwise_equal(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.defined() != b.defined()) return false;
  if (!a.defined()) return true;
  if (a.scalar_type() != b.scalar_type() || !a.sizes().equals(b.sizes())) return false;
  const auto ca = a.detach().contiguous();
  const auto cb = b.detach().contiguous();
  return std::memcmp(ca.data_ptr(), cb.data_ptr(), ca.nbytes()) == 0;
}

bool weights_bitwise_equal(const WeightSet& a, const WeightSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.entries()[i].first != b.entries()[i].first) return false;
    if (!tensors_bitwise_equal(a.entries()[i].second, b.entries()[i].second)) return false;
  }
  return true;
}

std::vector<torch::Tensor> grads_of(const torch::Tensor& objective, const std::vector<torch::Tensor>& inputs) {
  if (!objective.requires_grad()) return std::vector<torch::Tensor>(inputs.size());
  return torch::autograd::grad({objective}, inputs, {}, /*retain_graph=*/true, /*create_graph=*/false,
                               /*allow_unused=*/true);
}

double scalar(const torch::Tensor& t) { return t.detach().item<double>(); }

// Stream tags for per-iteration randomness.
constexpr std::uint64_t kBatchStream = 0x6261;
constexpr std::uint64_t kStepStream = 0x7374;

}  // namespace

// ---------------------------------------------------------------------------
// ADAM, schedule, EMA
// ---------------------------------------------------------------------------

AdamState AdamState::zeros_like(const WeightSet& w) {
  AdamState s;
  for (const auto& [name, t] : w.entries()) {
    s.m.push_back(torch::zeros_like(t.detach()));
    s.v.push_back(torch::zeros_like(t.detach()));
  }
  return s;
}

bool AdamState::bitwise_equal(const AdamState& other) const {
  if (step != other.step || m.size() != other.m.size() || v.size() != other.v.size()) return false;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!tensors_bitwise_equal(m[i], other.m[i]) || !tensors_bitwise_equal(v[i], other.v[i])) return false;
  return true;
}

AdamUpdate adam_step(const WeightSet& weights, const std::vector<torch::Tensor>& grads, const AdamState& state,
                     double lr, const AdamConfig& config) {
  if (grads.size() != weights.size() || state.m.size() != weights.size())
    throw StructuralError("adam_step: gradient/state count does not match weights");
  torch::NoGradGuard no_grad;
  AdamUpdate out;
  out.state.step = state.step + 1;
  const double t = static_cast<double>(out.state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  std::vector<torch::Tensor> next;
  next.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto w = weights.entries()[i].second.detach();
    const auto g = grads[i].defined() ? grads[i].detach() : torch::zeros_like(w);
    auto m = state.m[i] * config.beta1 + g * (1.0 - config.beta1);
    auto v = state.v[i] * config.beta2 + g * g * (1.0 - config.beta2);
    next.push_back(w - lr * (m / bc1) / ((v / bc2).sqrt() + config.eps));
    out.state.m.push_back(std::move(m));
    out.state.v.push_back(std::move(v));
  }
  out.weights = weights.with_tensors(std::move(next));
  return out;
}

double lr_at(std::int64_t iteration, const TrainConfig& config) {
  int halvings = 0;
  for (auto m : resolved_milestones(config))
    if (m <= iteration) ++halvings;
  return config.base_lr * std::ldexp(1.0, -halvings);
}

WeightSet ema_update(const WeightSet& ema, const WeightSet& current, double decay) {
  if (ema.size() != current.size()) throw StructuralError("ema_update: weight sets differ");
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> next;
  next.reserve(ema.size());
  for (std::size_t i = 0; i < ema.size(); ++i)
    next.push_back(ema.entries()[i].second.detach() * decay + current.entries()[i].second.detach() * (1.0 - decay));
  return ema.with_tensors(std::move(next));
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

bool TrainState::bitwise_equal(const TrainState& o) const {
  return iteration == o.iteration && weights_bitwise_equal(g, o.g) && weights_bitwise_equal(g_inv, o.g_inv) &&
         weights_bitwise_equal(d_real, o.d_real) && weights_bitwise_equal(d_syn, o.d_syn) &&
         weights_bitwise_equal(embedder, o.embedder) && weights_bitwise_equal(ema_g, o.ema_g) &&
         weights_bitwise_equal(ema_g_inv, o.ema_g_inv) && equilibrium == o.equilibrium && centroids == o.centroids &&
         opt_g.bitwise_equal(o.opt_g) && opt_g_inv.bitwise_equal(o.opt_g_inv) &&
         opt_d_real.bitwise_equal(o.opt_d_real) && opt_d_syn.bitwise_equal(o.opt_d_syn);
}

TrainState init_state(const TrainConfig& config, const WeightSet& embedder) {
  validate(config);
  check_weights(embedder_spec(config), embedder);
  TrainState s;
  s.g = init_weights(generator_spec(config), derive_seed(config.seed, "init/g"));
  s.g_inv = init_weights(inverse_generator_spec(config), derive_seed(config.seed, "init/g_inv"));
  s.d_real = init_weights(discriminator_spec(config), derive_seed(config.seed, "init/d_real"));
  s.d_syn = init_weights(discriminator_spec(config), derive_seed(config.seed, "init/d_syn"));
  s.embedder = embedder.detached();
  s.ema_g = s.g.detached();
  s.ema_g_inv = s.g_inv.detached();
  s.equilibrium = config.equilibrium;
  s.centroids = CentroidStore(config.arch.embedding_dim, config.centroid_beta, config.beta_as_retention);
  std::vector<std::int64_t> labels;
  for (auto id = config.data.synthetic.first_id; id < config.data.synthetic.end_id(); ++id) labels.push_back(id);
  s.centroids.register_labels(labels);
  s.opt_g = AdamState::zeros_like(s.g);
  s.opt_g_inv = AdamState::zeros_like(s.g_inv);
  s.opt_d_real = AdamState::zeros_like(s.d_real);
  s.opt_d_syn = AdamState::zeros_like(s.d_syn);
  return s;
}

StepBatches sample_batches(const DatasetBundle& bundle, const TrainConfig& config, std::int64_t iteration) {
  if (bundle.unpaired_synthetic.empty() || bundle.unpaired_real.empty() || bundle.paired.empty())
    throw DataError("sample_batches: empty training split");
  Engine rng(derive_seed(config.seed, {kBatchStream, static_cast<std::uint64_t>(iteration)}));
  const auto n = static_cast<std::size_t>(config.batch_size);
  auto pick = [&rng](std::size_t size) { return std::uniform_int_distribution<std::size_t>(0, size - 1)(rng); };

  StepBatches b;
  std::vector<const Image*> xs, ys, ps, pr;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = bundle.unpaired_synthetic[pick(bundle.unpaired_synthetic.size())];
    xs.push_back(&s.image);
    b.synthetic.labels.push_back(s.params.identity_label);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = bundle.unpaired_real[pick(bundle.unpaired_real.size())];
    ys.push_back(&r.image);
    b.real.labels.push_back(r.label);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = bundle.paired[pick(bundle.paired.size())];
    ps.push_back(&p.synthetic);
    pr.push_back(&p.real);
    b.paired_synthetic.labels.push_back(p.params.identity_label);
    b.paired_real.labels.push_back(p.params.identity_label);
  }
  b.synthetic.pixels = to_tensor(std::span<const Image* const>(xs));
  b.synthetic.tag = DomainTag::synthetic;
  b.real.pixels = to_tensor(std::span<const Image* const>(ys));
  b.real.tag = DomainTag::real;
  b.paired_synthetic.pixels = to_tensor(std::span<const Image* const>(ps));
  b.paired_synthetic.tag = DomainTag::synthetic;
  b.paired_real.pixels = to_tensor(std::span<const Image* const>(pr));
  b.paired_real.tag = DomainTag::real;
  return b;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#define MORPHGAN_METRIC_FIELDS(X)                                                                              \
  X(loss_g) X(loss_g_inv) X(loss_cyc) X(loss_dr) X(loss_ds) X(loss_dp) X(loss_c) X(loss_id) X(real_err_r)      \
  X(real_err_s) X(pair_term) X(objective_g) X(objective_g_inv) X(objective_d) X(k_dr) X(k_ds) X(k_dp) X(sigma2) \
  X(lr)

json StepMetrics::to_json() const {
  json j;
  j["iteration"] = iteration;
#define X(f) j[#f] = f;
  MORPHGAN_METRIC_FIELDS(X)
#undef X
  return j;
}

StepMetrics StepMetrics::from_json(const json& j) {
  StepMetrics m;
  m.iteration = j.at("iteration").get<std::int64_t>();
  auto read = [&j](const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? std::nan("") : v.get<double>();
  };
#define X(f) m.f = read(#f);
  MORPHGAN_METRIC_FIELDS(X)
#undef X
  return m;
}

bool StepMetrics::all_finite() const {
  bool ok = true;
#define X(f) ok = ok && std::isfinite(f);
  MORPHGAN_METRIC_FIELDS(X)
#undef X
  return ok;
}

#undef MORPHGAN_METRIC_FIELDS

MetricsLog::MetricsLog(const std::filesystem::path& path, bool append) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!out_) throw Error("cannot open metrics log " + path.string());
}

void MetricsLog::write(const StepMetrics& m) {
  out_ << m.to_json().dump() << '\n';
  out_.flush();
}

void MetricsLog::write_diagnostic(const json& record) {
  out_ << json{{"diagnostic", record}}.dump() << '\n';
  out_.flush();
}

std::vector<StepMetrics> MetricsLog::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open metrics log " + path.string());
  std::vector<StepMetrics> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line);
    if (j.contains("diagnostic")) continue;
    out.push_back(StepMetrics::from_json(j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// One training iteration
// ---------------------------------------------------------------------------

StepResult train_step(const TrainState& state, const StepBatches& batches, const TrainConfig& config) {
  const auto gspec = generator_spec(config);
  const auto gispec = inverse_generator_spec(config);
  const auto dspec = discriminator_spec(config);
  const auto espec = embedder_spec(config);
  const auto& lw = config.weights;

  const auto x = batches.synthetic.pixels;
  const auto y = batches.real.pixels;
  const auto ps = batches.paired_synthetic.pixels;
  const auto pr = batches.paired_real.pixels;
  if (x.size(0) < 2) throw ArgumentError("train_step: batch size must be >= 2");

  const auto step_seed = derive_seed(config.seed, {kStepStream, static_cast<std::uint64_t>(state.iteration)});

  const auto g = state.g.requiring_grad();
  const auto gi = state.g_inv.requiring_grad();
  const auto dr = state.d_real.requiring_grad();
  const auto ds = state.d_syn.requiring_grad();
  const auto& eq = state.equilibrium;

  // Forward passes shared by every objective.
  const auto gx = generator_forward(gspec, g, x, Mode::train, derive_seed(step_seed, "dropout"));
  const auto x_cyc = generator_forward(gispec, gi, gx, Mode::train, 0);
  const auto l_cyc = cycle_loss(x, x_cyc);

  const auto l_g = began_gen_loss(gx, autoencode(dspec, dr, gx));
  const auto real_err_r = began_gen_loss(y, autoencode(dspec, dr, y));
  const auto l_gi = began_gen_loss(x_cyc, autoencode(dspec, ds, x_cyc));
  const auto real_err_s = began_gen_loss(x, autoencode(dspec, ds, x));
  const auto l_dr = began_disc_loss(real_err_r, l_g, eq.k_dr);
  const auto l_ds = began_disc_loss(real_err_s, l_gi, eq.k_ds);

  const auto inv_real = generator_forward(gispec, gi, pr, Mode::train, 0);
  const auto pair_term = began_gen_loss(ps, inv_real);
  const auto l_dp = pair_disc_loss(ps, inv_real, l_cyc, eq.k_dp);

  std::vector<AugmentParams> aug;
  const int crop = espec.input_size;
  for (std::int64_t i = 0; i < x.size(0); ++i)
    aug.push_back(draw_augment(derive_seed(step_seed, {0x6175, static_cast<std::uint64_t>(i)}), gspec.input_size, crop));
  const auto emb = embed(espec, state.embedder, augment_batch(gx, aug));
  const auto id = identity_set_loss(emb, batches.synthetic.labels, state.centroids, config.identity);
  const auto l_id = identity_pixel_loss(x, gx);

  auto obj_g = lw.lambda_cyc * l_cyc;
  if (lw.lambda_c > 0) obj_g = obj_g + lw.lambda_c * id.loss;
  if (config.use_identity_pixel_loss && lw.lambda_id > 0) obj_g = obj_g + lw.lambda_id * l_id;
  auto obj_gi = lw.lambda_cyc * l_cyc + lw.lambda_dp * l_dp;
  if (!config.detach_adversarial) {
    obj_g = obj_g + l_g;
    obj_gi = obj_gi + l_gi;
  }
  const auto obj_d = l_dr + l_ds;

  StepMetrics m;
  m.iteration = state.iteration;
  m.loss_g = scalar(l_g);
  m.loss_g_inv = scalar(l_gi);
  m.loss_cyc = scalar(l_cyc);
  m.loss_dr = scalar(l_dr);
  m.loss_ds = scalar(l_ds);
  m.loss_dp = scalar(l_dp);
  m.loss_c = scalar(id.loss);
  m.loss_id = scalar(l_id);
  m.real_err_r = scalar(real_err_r);
  m.real_err_s = scalar(real_err_s);
  m.pair_term = scalar(pair_term);
  m.objective_g = scalar(obj_g);
  m.objective_g_inv = scalar(obj_gi);
  m.objective_d = scalar(obj_d);
  m.sigma2 = id.sigma2;
  m.lr = lr_at(state.iteration, config);
  m.k_dr = eq.k_dr;
  m.k_ds = eq.k_ds;
  m.k_dp = eq.k_dp;
  if (!m.all_finite())
    throw TrainingDiverged("non-finite loss at iteration " + std::to_string(state.iteration), m);

  // Each objective w.r.t. its own parameters only.
  const auto grad_g = grads_of(obj_g, g.tensors());
  const auto grad_gi = grads_of(obj_gi, gi.tensors());
  const auto grad_dr = grads_of(obj_d, dr.tensors());
  const auto grad_ds = grads_of(obj_d, ds.tensors());

  StepResult out;
  auto& next = out.state;
  next.iteration = state.iteration + 1;
  auto ug = adam_step(state.g, grad_g, state.opt_g, m.lr, config.adam);
  auto ugi = adam_step(state.g_inv, grad_gi, state.opt_g_inv, m.lr, config.adam);
  auto udr = adam_step(state.d_real, grad_dr, state.opt_d_real, m.lr, config.adam);
  auto uds = adam_step(state.d_syn, grad_ds, state.opt_d_syn, m.lr, config.adam);
  next.g = std::move(ug.weights);
  next.opt_g = std::move(ug.state);
  next.g_inv = std::move(ugi.weights);
  next.opt_g_inv = std::move(ugi.state);
  next.d_real = std::move(udr.weights);
  next.opt_d_real = std::move(udr.state);
  next.d_syn = std::move(uds.weights);
  next.opt_d_syn = std::move(uds.state);
  if (!next.g.all_finite() || !next.g_inv.all_finite() || !next.d_real.all_finite() || !next.d_syn.all_finite())
    throw TrainingDiverged("non-finite weights after iteration " + std::to_string(state.iteration), m);
  next.embedder = state.embedder;

  next.equilibrium = eq;
  next.equilibrium.k_dr = update_k(eq.k_dr, m.real_err_r, m.loss_g, eq.rate, eq.gamma);
  next.equilibrium.k_ds = update_k(eq.k_ds, m.real_err_s, m.loss_g_inv, eq.rate, eq.gamma);
  next.equilibrium.k_dp = update_k(eq.k_dp, m.pair_term, m.loss_cyc, eq.rate, eq.gamma);
  m.k_dr = next.equilibrium.k_dr;
  m.k_ds = next.equilibrium.k_ds;
  m.k_dp = next.equilibrium.k_dp;

  next.centroids = update_centroids(state.centroids, emb.detach(), batches.synthetic.labels);
  next.ema_g = ema_update(state.ema_g, next.g, config.ema_decay);
  next.ema_g_inv = ema_update(state.ema_g_inv, next.g_inv, config.ema_decay);
  out.metrics = m;
  return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainResult train(const TrainConfig& config, const DatasetBundle& bundle, TrainState initial,
                  const TrainOptions& options) {
  validate(config);
  if (bundle.config != config.data) throw ConfigError("train: dataset was built from a different data config");
  const auto stop = options.stop_at < 0 ? config.total_iters : std::min(options.stop_at, config.total_iters);
  const auto gspec = generator_spec(config);

  std::vector<Image> grid_inputs;
  for (std::size_t i = 0; i < std::min<std::size_t>(8, bundle.unpaired_synthetic.size()); ++i)
    grid_inputs.push_back(bundle.unpaired_synthetic[i * (bundle.unpaired_synthetic.size() / 8)].image);

  TrainResult result;
  result.state = std::move(initial);
  while (result.state.iteration < stop) {
    const auto it = result.state.iteration;
    const auto batches = sample_batches(bundle, config, it);
    StepResult step;
    try {
      step = train_step(result.state, batches, config);
    } catch (const TrainingDiverged& e) {
      if (options.log != nullptr && options.log->is_open()) {
        auto rec = e.record().to_json();
        rec["error"] = e.what();
        options.log->write_diagnostic(rec);
      }
      throw;
    }
    result.state = std::move(step.state);
    if (options.log != nullptr && options.log->is_open()) options.log->write(step.metrics);
    if (options.on_step) options.on_step(step.metrics);
    if (config.log_every > 0 && (it + 1) % config.log_every == 0)
      std::cerr << "iter " << it + 1 << "/" << config.total_iters << "  L_G " << step.metrics.loss_g << "  L_cyc "
                << step.metrics.loss_cyc << "  L_C " << step.metrics.loss_c << "  k_dr " << step.metrics.k_dr << '\n';
    const auto done = result.state.iteration;
    if (!options.out_dir.empty()) {
      if (config.grid_every > 0 && done % config.grid_every == 0) {
        std::filesystem::create_directories(options.out_dir / "grids");
        write_png(options.out_dir / "grids" / ("iter_" + std::to_string(done) + ".png"),
                  translation_grid(gspec, result.state.ema_g, grid_inputs));
      }
      if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
        std::filesystem::create_directories(options.out_dir / "checkpoints");
        checkpoint_save(result.state, config, options.out_dir / "checkpoints" / "latest.ckpt");
      }
    }
    result.metrics.push_back(step.metrics);
  }
  return result;
}

TrainResult train(const TrainConfig& config, const DatasetBundle& bundle, const WeightSet& embedder,
                  const TrainOptions& options) {
  return train(config, bundle, init_state(config, embedder), options);
}

// ---------------------------------------------------------------------------
// Embedder pretraining
// ---------------------------------------------------------------------------

WeightSet train_classifier(const NetworkSpec& spec, std::span<const ClassificationSet> sets,
                           const PretrainConfig& schedule, const AdamConfig& adam, std::uint64_t seed) {
  if (sets.empty()) throw ArgumentError("train_classifier: no training sets");
  struct Head {
    std::vector<std::int64_t> classes;
    std::string name;
  };
  std::vector<Head> heads;
  auto trunk = init_weights(spec, derive_seed(seed, "init"));
  auto entries = trunk.entries();
  const std::size_t n_trunk = entries.size();
  auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(seed, "head"));
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec.embedding_dim));
  for (std::size_t s = 0; s < sets.size(); ++s) {
    if (sets[s].images.empty() || sets[s].images.size() != sets[s].labels.size())
      throw DataError("train_classifier: empty or inconsistent training set");
    std::set<std::int64_t> label_set(sets[s].labels.begin(), sets[s].labels.end());
    if (label_set.size() < 2) throw DataError("train_classifier: need at least two identities per set");
    Head h{{label_set.begin(), label_set.end()}, "head" + std::to_string(s) + ".w"};
    entries.emplace_back(h.name,
                         torch::rand({static_cast<std::int64_t>(h.classes.size()), spec.embedding_dim}, gen) * 2 * bound -
                             bound);
    heads.push_back(std::move(h));
  }
  WeightSet weights(std::move(entries));
  auto opt = AdamState::zeros_like(weights);
  const int image_size = sets.front().images.front()->height;

  for (int it = 0; it < schedule.iterations; ++it) {
    Engine rng(derive_seed(seed, {static_cast<std::uint64_t>(it)}));
    const auto w = weights.requiring_grad();
    const WeightSet tw(
        std::vector<WeightSet::Entry>(w.entries().begin(), w.entries().begin() + static_cast<long>(n_trunk)));
    torch::Tensor loss;
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const auto& set = sets[s];
      std::uniform_int_distribution<std::size_t> pick(0, set.images.size() - 1);
      std::vector<const Image*> imgs;
      std::vector<std::int64_t> targets;
      std::vector<AugmentParams> aug;
      for (int i = 0; i < schedule.batch_size; ++i) {
        const auto k = pick(rng);
        imgs.push_back(set.images[k]);
        const auto& cls = heads[s].classes;
        targets.push_back(std::lower_bound(cls.begin(), cls.end(), set.labels[k]) - cls.begin());
        aug.push_back(draw_augment(rng(), image_size, spec.input_size));
      }
      const auto e = embed(spec, tw, augment_batch(to_tensor(std::span<const Image* const>(imgs)), aug));
      const auto head = w[heads[s].name];
      const auto hn = head / head.norm(2, {1}, true).clamp_min(1e-12);
      const auto logits = schedule.logit_scale * torch::matmul(e, hn.t());
      const auto ce = torch::nn::functional::cross_entropy(logits, torch::tensor(targets, torch::kLong));
      loss = loss.defined() ? loss + set.loss_weight * ce : set.loss_weight * ce;
    }
    if (!std::isfinite(loss.item<double>())) throw NumericError("train_classifier: non-finite loss");
    const auto grads = grads_of(loss, w.tensors());
    const double frac = static_cast<double>(it) / schedule.iterations;
    const double lr = schedule.lr * (frac < 0.5 ? 1.0 : frac < 0.75 ? 0.5 : 0.25);
    auto upd = adam_step(weights, grads, opt, lr, adam);
    weights = std::move(upd.weights);
    opt = std::move(upd.state);
  }
  std::vector<WeightSet::Entry> out(weights.entries().begin(), weights.entries().begin() + static_cast<long>(n_trunk));
  return WeightSet(std::move(out)).detached();
}

WeightSet pretrain_embedder(std::span<const RealSample> pretrain_set, const TrainConfig& config) {
  validate(config);
  const auto& d = config.data;
  for (const SubsetSpec* s : {&d.synthetic, &d.real, &d.paired, &d.heldout, &d.generated})
    for (const auto& sample : pretrain_set)
      if (sample.label >= s->first_id && sample.label < s->end_id())
        throw ConfigError("pretrain_embedder: identity " + std::to_string(sample.label) +
                          " overlaps a training or evaluation split");
  ClassificationSet set;
  for (const auto& s : pretrain_set) {
    set.images.push_back(&s.image);
    set.labels.push_back(s.label);
  }
  return train_classifier(embedder_spec(config), std::span<const ClassificationSet>(&set, 1), config.pretrain,
                          config.adam, derive_seed(config.seed, "pretrain"));
}

}  // namespace morphgan
