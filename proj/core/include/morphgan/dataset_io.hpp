#pragma once

// Dataset directories: manifest.json plus one flat array file per field.
// See array_io.hpp for the array layout; images are stored NHWC float32,
// parameters as [N, P] float64 in MorphParams::flatten order, labels int64.

#include <filesystem>

#include "morphgan/toymm.hpp"

namespace morphgan {

inline constexpr int kDatasetFormatVersion = 1;

void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);

/// Throws IncompatibleVersionError / IntegrityError on bad manifests or files.
DatasetBundle load_dataset(const std::filesystem::path& dir);

/// True when `dir` holds a dataset whose manifest fingerprint matches `config`.
bool dataset_matches(const std::filesystem::path& dir, const DataConfig& config);

}  // namespace morphgan
