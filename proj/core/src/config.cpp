#include "morphgan/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "morphgan/error.hpp"

namespace morphgan {

using nlohmann::json;

std::string to_string(ExponentSign sign) { return sign == ExponentSign::magnet ? "magnet" : "as_printed"; }

ExponentSign exponent_sign_from_string(const std::string& text) {
  if (text == "magnet") return ExponentSign::magnet;
  if (text == "as_printed") return ExponentSign::as_printed;
  throw ConfigError("identity.eq7_sign must be 'magnet' or 'as_printed', got '" + text + "'");
}

std::vector<std::int64_t> resolved_milestones(const TrainConfig& c) {
  if (!c.lr_milestones.empty()) return c.lr_milestones;
  std::vector<std::int64_t> out;
  const double scale = static_cast<double>(c.total_iters) / static_cast<double>(kReferenceTotalIters);
  for (auto m : kReferenceMilestones) {
    auto v = static_cast<std::int64_t>(std::llround(static_cast<double>(m) * scale));
    if (!out.empty() && v <= out.back()) v = out.back() + 1;
    out.push_back(v);
  }
  return out;
}

NetworkSpec generator_spec(const TrainConfig& c) {
  NetworkSpec s;
  s.kind = NetKind::generator;
  s.channels = c.data.channels;
  s.input_size = c.data.image_size;
  s.base_channels = c.arch.gen_base_channels;
  s.num_residual_blocks = c.arch.num_residual_blocks;
  s.use_skip = c.arch.use_skip;
  s.dropout_keep = c.arch.dropout_keep;
  return s;
}

NetworkSpec inverse_generator_spec(const TrainConfig& c) {
  auto s = generator_spec(c);
  s.kind = NetKind::inverse_generator;
  return s;
}

NetworkSpec discriminator_spec(const TrainConfig& c) {
  NetworkSpec s;
  s.kind = NetKind::autoencoder_discriminator;
  s.channels = c.data.channels;
  s.input_size = c.data.image_size;
  s.base_channels = c.arch.disc_base_channels;
  s.bottleneck = c.arch.disc_bottleneck;
  s.depth = c.arch.disc_depth;
  return s;
}

NetworkSpec embedder_spec(const TrainConfig& c) {
  NetworkSpec s;
  s.kind = NetKind::embedder;
  s.channels = c.data.channels;
  s.input_size = default_crop_size(c.data.image_size);
  s.base_channels = c.arch.emb_base_channels;
  s.embedding_dim = c.arch.embedding_dim;
  return s;
}

void validate(const TrainConfig& c) {
  std::vector<std::string> bad;
  auto check = [&bad](bool ok, const std::string& msg) {
    if (!ok) bad.push_back(msg);
  };
  check(c.batch_size >= 2, "batch_size: must be >= 2");
  check(c.total_iters >= 0, "total_iters: must be >= 0");
  check(c.base_lr > 0 && std::isfinite(c.base_lr), "base_lr: must be positive");
  check(c.ema_decay >= 0 && c.ema_decay <= 1, "ema_decay: must lie in [0,1]");
  const auto ms = resolved_milestones(c);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    check(ms[i] >= 0, "lr_milestones: must be nonnegative");
    if (i > 0) check(ms[i] > ms[i - 1], "lr_milestones: must be strictly increasing");
  }
  try {
    validate(c.weights);
  } catch (const ConfigError&) {
    bad.push_back("weights: lambdas must be nonnegative");
  }
  const auto& e = c.equilibrium;
  check(e.k_dr >= 0 && e.k_dr <= 1 && e.k_ds >= 0 && e.k_ds <= 1 && e.k_dp >= 0 && e.k_dp <= 1,
        "equilibrium: initial k values must lie in [0,1]");
  check(e.rate >= 0, "equilibrium.rate: must be >= 0");
  check(c.centroid_beta >= 0 && c.centroid_beta <= 1, "centroid_beta: must lie in [0,1]");
  check(c.identity.sigma_floor > 0, "identity.sigma_floor: must be positive");
  check(c.adam.beta1 >= 0 && c.adam.beta1 < 1 && c.adam.beta2 >= 0 && c.adam.beta2 < 1 && c.adam.eps > 0,
        "adam: betas must lie in [0,1) and eps > 0");
  check(c.arch.gen_base_channels >= 1 && c.arch.disc_base_channels >= 1 && c.arch.emb_base_channels >= 1,
        "arch: channel counts must be >= 1");
  check(c.arch.dropout_keep > 0 && c.arch.dropout_keep <= 1, "arch.dropout_keep: must lie in (0,1]");
  check(c.arch.embedding_dim >= 1, "arch.embedding_dim: must be >= 1");
  check(c.pretrain.iterations >= 0 && c.pretrain.batch_size >= 2, "pretrain: iterations >= 0, batch_size >= 2");
  check(c.eval.n_pos >= 1 && c.eval.n_neg >= 1 && c.eval.histogram_bins >= 1, "eval: counts must be >= 1");
  check(!c.augment_exp.fractions.empty(), "augment_exp.fractions: must not be empty");
  for (double f : c.augment_exp.fractions) check(f > 0 && f <= 1, "augment_exp.fractions: each must lie in (0,1]");
  try {
    validate(c.data);
  } catch (const ConfigError& err) {
    bad.push_back(err.what());
  }
  if (bad.empty()) {
    try {
      validate(discriminator_spec(c));
      validate(generator_spec(c));
      validate(embedder_spec(c));
    } catch (const StructuralError& err) {
      bad.push_back(std::string("arch/data: ") + err.what());
    }
  }
  if (!bad.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

/// Reads known keys from one JSON object and records unknown or mistyped keys.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) errors_.push_back(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.is_object() || !j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      errors_.push_back(path_ + key + ": " + e.what());
    }
  }

  void object(const char* key, const std::function<void(ObjectReader&)>& fn) {
    if (!j_.is_object() || !j_.contains(key)) return;
    seen_.insert(key);
    ObjectReader sub(j_.at(key), path_ + key + ".", errors_);
    if (j_.at(key).is_object()) fn(sub);
    sub.finish();
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& item : j_.items())
      if (!seen_.contains(item.key())) errors_.push_back(path_ + item.key() + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

void read_subset(ObjectReader& r, SubsetSpec& s) {
  r.get("first_id", s.first_id);
  r.get("num_ids", s.num_ids);
  r.get("per_id", s.per_id);
}

void read_data(ObjectReader& r, DataConfig& c) {
  r.get("seed", c.seed);
  r.get("image_size", c.image_size);
  r.get("channels", c.channels);
  r.get("d_id", c.d_id);
  r.get("d_ex", c.d_ex);
  r.object("synthetic", [&](ObjectReader& s) { read_subset(s, c.synthetic); });
  r.object("real", [&](ObjectReader& s) { read_subset(s, c.real); });
  r.object("paired", [&](ObjectReader& s) { read_subset(s, c.paired); });
  r.object("heldout", [&](ObjectReader& s) { read_subset(s, c.heldout); });
  r.object("pretrain", [&](ObjectReader& s) { read_subset(s, c.pretrain); });
  r.object("generated", [&](ObjectReader& s) { read_subset(s, c.generated); });
  r.object("nuisance", [&](ObjectReader& n) {
    auto& d = c.nuisance;
    n.get("expression_sd", d.expression_sd);
    n.get("shear_sd", d.shear_sd);
    n.get("roll_sd", d.roll_sd);
    n.get("light_angle_sd", d.light_angle_sd);
    n.get("light_strength_mean", d.light_strength_mean);
    n.get("light_strength_sd", d.light_strength_sd);
  });
}

void throw_if_errors(const std::vector<std::string>& errors) {
  if (errors.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

}  // namespace

void to_json(json& j, const SubsetSpec& s) {
  j = json{{"first_id", s.first_id}, {"num_ids", s.num_ids}, {"per_id", s.per_id}};
}

void from_json(const json& j, SubsetSpec& s) {
  std::vector<std::string> errors;
  ObjectReader r(j, "", errors);
  read_subset(r, s);
  r.finish();
  throw_if_errors(errors);
}

void to_json(json& j, const DataConfig& c) {
  const auto& n = c.nuisance;
  j = json{{"seed", c.seed},
           {"image_size", c.image_size},
           {"channels", c.channels},
           {"d_id", c.d_id},
           {"d_ex", c.d_ex},
           {"synthetic", c.synthetic},
           {"real", c.real},
           {"paired", c.paired},
           {"heldout", c.heldout},
           {"pretrain", c.pretrain},
           {"generated", c.generated},
           {"nuisance",
            {{"expression_sd", n.expression_sd},
             {"shear_sd", n.shear_sd},
             {"roll_sd", n.roll_sd},
             {"light_angle_sd", n.light_angle_sd},
             {"light_strength_mean", n.light_strength_mean},
             {"light_strength_sd", n.light_strength_sd}}}};
}

void from_json(const json& j, DataConfig& c) {
  std::vector<std::string> errors;
  ObjectReader r(j, "data.", errors);
  read_data(r, c);
  r.finish();
  throw_if_errors(errors);
}

void to_json(json& j, const NetworkSpec& s) {
  j = json{{"kind", std::string(to_string(s.kind))},
           {"channels", s.channels},
           {"input_size", s.input_size},
           {"base_channels", s.base_channels},
           {"num_residual_blocks", s.num_residual_blocks},
           {"use_skip", s.use_skip},
           {"dropout_keep", s.dropout_keep},
           {"embedding_dim", s.embedding_dim},
           {"bottleneck", s.bottleneck},
           {"depth", s.depth}};
}

void from_json(const json& j, NetworkSpec& s) {
  s.kind = net_kind_from_string(j.at("kind").get<std::string>());
  s.channels = j.at("channels").get<int>();
  s.input_size = j.at("input_size").get<int>();
  s.base_channels = j.at("base_channels").get<int>();
  s.num_residual_blocks = j.at("num_residual_blocks").get<int>();
  s.use_skip = j.at("use_skip").get<bool>();
  s.dropout_keep = j.at("dropout_keep").get<double>();
  s.embedding_dim = j.at("embedding_dim").get<int>();
  s.bottleneck = j.at("bottleneck").get<int>();
  s.depth = j.at("depth").get<int>();
}

void to_json(json& j, const TrainConfig& c) {
  json data;
  to_json(data, c.data);
  j = json{
      {"seed", c.seed},
      {"weights",
       {{"lambda_cyc", c.weights.lambda_cyc},
        {"lambda_dp", c.weights.lambda_dp},
        {"lambda_c", c.weights.lambda_c},
        {"lambda_id", c.weights.lambda_id}}},
      {"base_lr", c.base_lr},
      {"lr_milestones", c.lr_milestones},
      {"batch_size", c.batch_size},
      {"total_iters", c.total_iters},
      {"ema_decay", c.ema_decay},
      {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
      {"equilibrium",
       {{"k_dr", c.equilibrium.k_dr},
        {"k_ds", c.equilibrium.k_ds},
        {"k_dp", c.equilibrium.k_dp},
        {"rate", c.equilibrium.rate},
        {"gamma", c.equilibrium.gamma}}},
      {"centroid_beta", c.centroid_beta},
      {"beta_as_retention", c.beta_as_retention},
      {"identity",
       {{"eta", c.identity.eta},
        {"eq7_sign", to_string(c.identity.sign)},
        {"sigma_floor", c.identity.sigma_floor},
        {"sigma_stop_gradient", c.identity.sigma_stop_gradient}}},
      {"use_identity_pixel_loss", c.use_identity_pixel_loss},
      {"detach_adversarial", c.detach_adversarial},
      {"arch",
       {{"gen_base_channels", c.arch.gen_base_channels},
        {"num_residual_blocks", c.arch.num_residual_blocks},
        {"use_skip", c.arch.use_skip},
        {"dropout_keep", c.arch.dropout_keep},
        {"disc_base_channels", c.arch.disc_base_channels},
        {"disc_bottleneck", c.arch.disc_bottleneck},
        {"disc_depth", c.arch.disc_depth},
        {"emb_base_channels", c.arch.emb_base_channels},
        {"embedding_dim", c.arch.embedding_dim}}},
      {"data", data},
      {"pretrain",
       {{"iterations", c.pretrain.iterations},
        {"batch_size", c.pretrain.batch_size},
        {"lr", c.pretrain.lr},
        {"logit_scale", c.pretrain.logit_scale}}},
      {"eval", {{"n_pos", c.eval.n_pos}, {"n_neg", c.eval.n_neg}, {"histogram_bins", c.eval.histogram_bins}}},
      {"augment_exp",
       {{"fractions", c.augment_exp.fractions},
        {"iterations", c.augment_exp.iterations},
        {"batch_size", c.augment_exp.batch_size},
        {"lr", c.augment_exp.lr},
        {"generated_head_gradient_scale", c.augment_exp.generated_head_gradient_scale}}},
      {"log_every", c.log_every},
      {"grid_every", c.grid_every},
      {"checkpoint_every", c.checkpoint_every},
  };
}

void from_json(const json& j, TrainConfig& c) {
  std::vector<std::string> errors;
  ObjectReader r(j, "", errors);
  r.get("seed", c.seed);
  r.object("weights", [&](ObjectReader& w) {
    w.get("lambda_cyc", c.weights.lambda_cyc);
    w.get("lambda_dp", c.weights.lambda_dp);
    w.get("lambda_c", c.weights.lambda_c);
    w.get("lambda_id", c.weights.lambda_id);
  });
  r.get("base_lr", c.base_lr);
  r.get("lr_milestones", c.lr_milestones);
  r.get("batch_size", c.batch_size);
  r.get("total_iters", c.total_iters);
  r.get("ema_decay", c.ema_decay);
  r.object("adam", [&](ObjectReader& a) {
    a.get("beta1", c.adam.beta1);
    a.get("beta2", c.adam.beta2);
    a.get("eps", c.adam.eps);
  });
  r.object("equilibrium", [&](ObjectReader& e) {
    e.get("k_dr", c.equilibrium.k_dr);
    e.get("k_ds", c.equilibrium.k_ds);
    e.get("k_dp", c.equilibrium.k_dp);
    e.get("rate", c.equilibrium.rate);
    e.get("gamma", c.equilibrium.gamma);
  });
  r.get("centroid_beta", c.centroid_beta);
  r.get("beta_as_retention", c.beta_as_retention);
  r.object("identity", [&](ObjectReader& i) {
    i.get("eta", c.identity.eta);
    std::string sign = to_string(c.identity.sign);
    i.get("eq7_sign", sign);
    try {
      c.identity.sign = exponent_sign_from_string(sign);
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
    i.get("sigma_floor", c.identity.sigma_floor);
    i.get("sigma_stop_gradient", c.identity.sigma_stop_gradient);
  });
  r.get("use_identity_pixel_loss", c.use_identity_pixel_loss);
  r.get("detach_adversarial", c.detach_adversarial);
  r.object("arch", [&](ObjectReader& a) {
    a.get("gen_base_channels", c.arch.gen_base_channels);
    a.get("num_residual_blocks", c.arch.num_residual_blocks);
    a.get("use_skip", c.arch.use_skip);
    a.get("dropout_keep", c.arch.dropout_keep);
    a.get("disc_base_channels", c.arch.disc_base_channels);
    a.get("disc_bottleneck", c.arch.disc_bottleneck);
    a.get("disc_depth", c.arch.disc_depth);
    a.get("emb_base_channels", c.arch.emb_base_channels);
    a.get("embedding_dim", c.arch.embedding_dim);
  });
  r.object("data", [&](ObjectReader& d) { read_data(d, c.data); });
  r.object("pretrain", [&](ObjectReader& p) {
    p.get("iterations", c.pretrain.iterations);
    p.get("batch_size", c.pretrain.batch_size);
    p.get("lr", c.pretrain.lr);
    p.get("logit_scale", c.pretrain.logit_scale);
  });
  r.object("eval", [&](ObjectReader& e) {
    e.get("n_pos", c.eval.n_pos);
    e.get("n_neg", c.eval.n_neg);
    e.get("histogram_bins", c.eval.histogram_bins);
  });
  r.object("augment_exp", [&](ObjectReader& a) {
    a.get("fractions", c.augment_exp.fractions);
    a.get("iterations", c.augment_exp.iterations);
    a.get("batch_size", c.augment_exp.batch_size);
    a.get("lr", c.augment_exp.lr);
    a.get("generated_head_gradient_scale", c.augment_exp.generated_head_gradient_scale);
  });
  r.get("log_every", c.log_every);
  r.get("grid_every", c.grid_every);
  r.get("checkpoint_every", c.checkpoint_every);
  r.finish();
  throw_if_errors(errors);
}

TrainConfig merge_config(const TrainConfig& base, const json& overrides) {
  TrainConfig c = base;
  from_json(overrides, c);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path, const TrainConfig& base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(is, nullptr, true, /*ignore_comments*/ true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return merge_config(base, j);
}

std::string config_to_text(const TrainConfig& config) {
  json j = config;
  return j.dump(2);
}

}  // namespace morphgan
