#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "morphgan/config.hpp"
#include "morphgan/dataset_io.hpp"
#include "morphgan/error.hpp"
#include "morphgan/eval.hpp"
#include "morphgan/grids.hpp"
#include "morphgan/rng.hpp"
#include "morphgan/trainer.hpp"

namespace morphgan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int size = 32;
  std::int64_t iters = 0;
  double lambda_cyc = 0, lambda_dp = 0, lambda_c = 0, lambda_id = 0;
  std::string eq7_sign;
  bool resume = false;
};

struct Run {
  std::string command;
  fs::path root;
  fs::path dir;
  TrainConfig config;
  std::vector<std::string> artifacts;
  std::string started;
  std::ostream& out;
  std::ostream& err;

  fs::path artifact(const std::string& name) {
    artifacts.push_back(name);
    return dir / name;
  }
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

void write_manifest(const Run& run) {
  json m;
  m["command"] = run.command;
  m["config"] = run.config;
  m["seeds"] = {{"root", run.config.seed}, {"data", run.config.data.seed}};
  m["artifacts"] = run.artifacts;
  m["tool_version"] = MORPHGAN_VERSION;
  m["started"] = run.started;
  m["finished"] = utc_now();
  write_text(run.dir / "run_manifest.json", m.dump(2) + "\n");
}

std::optional<TrainConfig> manifest_config(const fs::path& run_dir) {
  std::ifstream f(run_dir / "run_manifest.json");
  if (!f) return std::nullopt;
  try {
    const auto m = json::parse(f);
    TrainConfig c;
    from_json(m.at("config"), c);
    return c;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Upstream artifacts: reuse when cached with a matching config, else rebuild.
// ---------------------------------------------------------------------------

DatasetBundle get_dataset(Run& run) {
  const auto dir = run.root / "make-data" / "dataset";
  if (dataset_matches(dir, run.config.data)) {
    run.err << "using cached dataset " << dir.string() << '\n';
    return load_dataset(dir);
  }
  run.err << "building dataset\n";
  return build_datasets(run.config.data);
}

bool same_embedder_inputs(const TrainConfig& a, const TrainConfig& b) {
  return a.seed == b.seed && a.data == b.data && a.arch == b.arch && a.pretrain == b.pretrain && a.adam == b.adam;
}

WeightSet get_embedder(Run& run, const DatasetBundle& bundle) {
  const auto dir = run.root / "pretrain-embedder";
  const auto cached = manifest_config(dir);
  if (cached && same_embedder_inputs(*cached, run.config) && fs::exists(dir / "embedder.weights")) {
    run.err << "using cached embedder " << (dir / "embedder.weights").string() << '\n';
    return load_weights(dir / "embedder.weights");
  }
  run.err << "pretraining embedder\n";
  return pretrain_embedder(bundle.pretrain_real, run.config);
}

WeightSet get_generator(Run& run, const DatasetBundle& bundle, const WeightSet& embedder) {
  const auto path = run.root / "train" / "checkpoints" / "final.ckpt";
  if (fs::exists(path)) {
    TrainConfig stored;
    auto state = checkpoint_load(path, &stored);
    if (stored == run.config) {
      run.err << "using cached generator " << path.string() << '\n';
      return state.ema_g;
    }
  }
  run.err << "training generator\n";
  return train(run.config, bundle, embedder).state.ema_g;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_make_data(Run& run) {
  const auto bundle = build_datasets(run.config.data);
  check_invariants(bundle);
  save_dataset(bundle, run.artifact("dataset"));
  run.out << "synthetic " << bundle.unpaired_synthetic.size() << ", real " << bundle.unpaired_real.size()
          << ", paired " << bundle.paired.size() << ", held-out " << bundle.heldout.size() << ", pretrain "
          << bundle.pretrain_real.size() << '\n';
  run.out << "fingerprint " << fingerprint(run.config.data) << '\n';
}

void cmd_pretrain_embedder(Run& run) {
  const auto bundle = get_dataset(run);
  const auto emb = pretrain_embedder(bundle.pretrain_real, run.config);
  save_weights(emb, embedder_spec(run.config), run.artifact("embedder.weights"));
  std::vector<Image> images;
  std::vector<std::int64_t> labels;
  for (const auto& p : bundle.heldout) {
    images.push_back(p.real);
    labels.push_back(p.params.identity_label);
  }
  const auto v = verify(images, labels, embedder_spec(run.config), emb, run.config.eval,
                        derive_seed(run.config.seed, "eval/pairs"));
  const json report{{"heldout_real_accuracy", v.eer.best_accuracy}, {"heldout_real_one_minus_eer", 1.0 - v.eer.eer}};
  write_text(run.artifact("embedder_eval.json"), report.dump(2) + "\n");
  run.out << "held-out real verification: accuracy " << v.eer.best_accuracy << ", 1-EER " << 1.0 - v.eer.eer << '\n';
}

void cmd_train(Run& run, bool resume) {
  const auto bundle = get_dataset(run);
  const auto ckpt = run.dir / "checkpoints" / "latest.ckpt";
  TrainState state;
  bool resumed = false;
  if (resume && fs::exists(ckpt)) {
    TrainConfig stored;
    state = checkpoint_load(ckpt, &stored);
    if (!(stored == run.config)) throw ConfigError("--resume: checkpoint was written with a different config");
    resumed = true;
    run.err << "resuming at iteration " << state.iteration << '\n';
  } else {
    state = init_state(run.config, get_embedder(run, bundle));
  }
  const auto gspec = generator_spec(run.config);
  const double fidelity_init =
      oracle_fidelity(gspec, init_weights(gspec, derive_seed(run.config.seed, "init/g")), bundle.heldout);

  MetricsLog log(run.artifact("metrics.jsonl"), resumed);
  TrainOptions opt;
  opt.out_dir = run.dir;
  opt.log = &log;
  auto result = train(run.config, bundle, std::move(state), opt);
  checkpoint_save(result.state, run.config, run.artifact("checkpoints/final.ckpt"));
  checkpoint_save(result.state, run.config, ckpt);
  run.artifacts.push_back("checkpoints/latest.ckpt");
  if (run.config.grid_every > 0) run.artifacts.push_back("grids");

  const double fidelity_final = oracle_fidelity(gspec, result.state.ema_g, bundle.heldout);
  json summary{{"iterations", result.state.iteration},
               {"oracle_fidelity_untrained", fidelity_init},
               {"oracle_fidelity_final_ema", fidelity_final},
               {"k", {{"k_dr", result.state.equilibrium.k_dr},
                      {"k_ds", result.state.equilibrium.k_ds},
                      {"k_dp", result.state.equilibrium.k_dp}}}};
  if (!result.metrics.empty()) summary["final_metrics"] = result.metrics.back().to_json();
  write_text(run.artifact("summary.json"), summary.dump(2) + "\n");
  run.out << "oracle fidelity: untrained " << fidelity_init << ", final EMA " << fidelity_final << '\n';
}

void cmd_evaluate(Run& run) {
  const auto bundle = get_dataset(run);
  const auto emb = get_embedder(run, bundle);
  const auto g = get_generator(run, bundle, emb);
  const auto gen = evaluate(run.config, bundle, g, emb);
  const auto syn = evaluate_synthetic_baseline(run.config, bundle, emb);
  std::ostringstream lines;
  auto jg = gen.to_json();
  jg["images"] = "generated";
  auto js = syn.to_json();
  js["images"] = "synthetic";
  lines << jg.dump() << '\n' << js.dump() << '\n';
  write_text(run.artifact("report.jsonl"), lines.str());
  write_text(run.artifact("histogram_generated.csv"), gen.histogram.to_csv());
  write_text(run.artifact("histogram_synthetic.csv"), syn.histogram.to_csv());
  char buf[256];
  std::ostringstream table;
  std::snprintf(buf, sizeof(buf), "%-10s %10s %10s %12s\n%-10s %10.4f %10.4f %12.5f\n%-10s %10.4f %10.4f %12.5f\n",
                "images", "accuracy", "1-EER", "fidelity", "generated", gen.accuracy, gen.one_minus_eer,
                gen.oracle_fidelity, "synthetic", syn.accuracy, syn.one_minus_eer, syn.oracle_fidelity);
  table << buf;
  write_text(run.artifact("report.txt"), table.str());
  run.out << table.str();
}

void cmd_ablate(Run& run) {
  const auto bundle = get_dataset(run);
  const auto emb = get_embedder(run, bundle);
  std::ofstream jl(run.artifact("ablation.jsonl"), std::ios::trunc);
  const auto rows = run_ablation(run.config, bundle, emb, [&](const AblationRow& row) {
    json j{{"variant", row.name},
           {"lambda_cyc", row.weights.lambda_cyc},
           {"lambda_dp", row.weights.lambda_dp},
           {"lambda_c", row.weights.lambda_c},
           {"lambda_id", row.weights.lambda_id}};
    if (row.report) j["report"] = row.report->to_json();
    else j["error"] = row.error;
    jl << j.dump() << '\n';
    jl.flush();
    run.err << "finished " << row.name << '\n';
  });
  const auto table = ablation_table(rows);
  write_text(run.artifact("ablation.txt"), table);
  run.out << table;
}

void cmd_augment_exp(Run& run) {
  const auto bundle = get_dataset(run);
  const auto emb = get_embedder(run, bundle);
  const auto g = get_generator(run, bundle, emb);
  const auto generated = generate_faces(run.config, g);
  const auto cells = augmentation_experiment(run.config.augment_exp.fractions, generated, run.config, bundle);
  std::ostringstream jl;
  for (const auto& c : cells) jl << c.to_json().dump() << '\n';
  write_text(run.artifact("augmentation.jsonl"), jl.str());
  const auto table = augmentation_table(cells);
  write_text(run.artifact("augmentation.txt"), table);
  run.out << table;
}

void cmd_emit_grids(Run& run) {
  const auto bundle = get_dataset(run);
  const auto emb = get_embedder(run, bundle);
  const auto g = get_generator(run, bundle, emb);
  const auto spec = generator_spec(run.config);
  if (bundle.heldout.empty()) throw DataError("emit-grids: empty held-out set");

  std::vector<Image> inputs;
  const std::size_t stride = std::max<std::size_t>(1, bundle.heldout.size() / 8);
  for (std::size_t i = 0; i < bundle.heldout.size() && inputs.size() < 8; i += stride)
    inputs.push_back(bundle.heldout[i].synthetic);
  write_png(run.artifact("translation.png"), translation_grid(spec, g, inputs));

  const auto& a = bundle.heldout.front().params;
  const auto& b = bundle.heldout.back().params;
  write_png(run.artifact("interpolation.png"), interpolation_grid(spec, g, a, b, 5, 5));
  write_png(run.artifact("illumination.png"), illumination_strip(spec, g, a, 7));
  run.out << "wrote translation.png, interpolation.png, illumination.png to " << run.dir.string() << '\n';
}

}  // namespace

fs::path output_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("MORPHGAN_OUT"); env != nullptr && *env != '\0') return env;
  return "runs";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised synthetic-to-real face translation (toy scale)", "morphgan"};
  app.set_version_flag("--version", std::string(MORPHGAN_VERSION));
  app.require_subcommand(1, 1);

  Flags f;
  auto* o_config = app.add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  auto* o_seed = app.add_option("--seed", f.seed, "root seed (also seeds the data)");
  app.add_option("--out", f.out, "output root (default $MORPHGAN_OUT or ./runs)");
  auto* o_size = app.add_option("--size", f.size, "image side")->check(CLI::IsMember({32, 64, 108}));
  auto* o_iters = app.add_option("--iters", f.iters, "training iterations")->check(CLI::PositiveNumber);
  auto* o_lcyc = app.add_option("--lambda-cyc", f.lambda_cyc, "cycle-consistency weight");
  auto* o_ldp = app.add_option("--lambda-dp", f.lambda_dp, "pair-discriminator weight");
  auto* o_lc = app.add_option("--lambda-c", f.lambda_c, "identity (centroid) weight");
  auto* o_lid = app.add_option("--lambda-id", f.lambda_id, "pixel identity weight");
  auto* o_sign = app.add_option("--eq7-sign", f.eq7_sign, "identity-loss exponent sign")
                     ->check(CLI::IsMember({"as_printed", "magnet"}));

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"make-data", "render the toy datasets"},
      {"pretrain-embedder", "pretrain the frozen identity embedder"},
      {"train", "train G, G', D_R and D_S"},
      {"evaluate", "verification and oracle fidelity of the trained generator"},
      {"ablate", "train and evaluate the four loss ablations"},
      {"augment-exp", "recognition with generated-data augmentation"},
      {"emit-grids", "sample, interpolation and illumination grids"},
  };
  std::vector<CLI::App*> commands;
  for (const auto& s : subs) commands.push_back(app.add_subcommand(s.name, s.help)->fallthrough());
  commands[2]->add_flag("--resume", f.resume, "continue from checkpoints/latest.ckpt");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  std::string command;
  for (auto* c : commands)
    if (c->parsed()) command = c->get_name();

  try {
    TrainConfig cfg;
    if (o_config->count() > 0) cfg = load_config(f.config, cfg);
    if (o_seed->count() > 0) {
      cfg.seed = f.seed;
      cfg.data.seed = f.seed;
    }
    if (o_size->count() > 0) cfg.data.image_size = f.size;
    if (o_iters->count() > 0) cfg.total_iters = f.iters;
    if (o_lcyc->count() > 0) cfg.weights.lambda_cyc = f.lambda_cyc;
    if (o_ldp->count() > 0) cfg.weights.lambda_dp = f.lambda_dp;
    if (o_lc->count() > 0) cfg.weights.lambda_c = f.lambda_c;
    if (o_lid->count() > 0) cfg.weights.lambda_id = f.lambda_id;
    if (o_sign->count() > 0) cfg.identity.sign = exponent_sign_from_string(f.eq7_sign);
    validate(cfg);

    torch::set_num_threads(1);
    Run run{command, output_root(f.out), {}, cfg, {}, utc_now(), out, err};
    run.dir = run.root / command;
    fs::create_directories(run.dir);

    if (command == "make-data") cmd_make_data(run);
    else if (command == "pretrain-embedder") cmd_pretrain_embedder(run);
    else if (command == "train") cmd_train(run, f.resume);
    else if (command == "evaluate") cmd_evaluate(run);
    else if (command == "ablate") cmd_ablate(run);
    else if (command == "augment-exp") cmd_augment_exp(run);
    else if (command == "emit-grids") cmd_emit_grids(run);
    write_manifest(run);
    return kOk;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace morphgan::cli
