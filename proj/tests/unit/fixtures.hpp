#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "morphgan/config.hpp"
#include "morphgan/toymm.hpp"
#include "morphgan/trainer.hpp"

namespace morphgan::test {

/// 16x16 data with a handful of identities per split.
inline DataConfig tiny_data() {
  DataConfig d;
  d.image_size = 16;
  d.synthetic = {0, 6, 4};
  d.real = {6, 6, 4};
  d.paired = {12, 6, 1};
  d.heldout = {18, 4, 3};
  d.pretrain = {22, 6, 4};
  d.generated = {28, 4, 2};
  return d;
}

/// Small networks, short schedules; a full train() call takes well under a second.
inline TrainConfig tiny_config() {
  TrainConfig c;
  c.data = tiny_data();
  c.batch_size = 4;
  c.total_iters = 12;
  c.log_every = 0;
  c.arch.gen_base_channels = 4;
  c.arch.num_residual_blocks = 1;
  c.arch.disc_base_channels = 4;
  c.arch.disc_bottleneck = 8;
  c.arch.emb_base_channels = 4;
  c.arch.embedding_dim = 8;
  c.pretrain.iterations = 20;
  c.pretrain.batch_size = 8;
  c.eval.n_pos = 10;
  c.eval.n_neg = 10;
  c.augment_exp.iterations = 10;
  c.augment_exp.batch_size = 8;
  return c;
}

inline const DatasetBundle& tiny_bundle() {
  static const DatasetBundle bundle = build_datasets(tiny_data());
  return bundle;
}

inline const WeightSet& tiny_embedder() {
  static const WeightSet emb = pretrain_embedder(tiny_bundle().pretrain_real, tiny_config());
  return emb;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "morphgan_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace morphgan::test
