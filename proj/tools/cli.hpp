#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace morphgan::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2, kConfigError = 3 };

/// Parses argv, runs one subcommand and returns the process exit status.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Output root: --out, else $MORPHGAN_OUT, else "runs".
std::filesystem::path output_root(const std::string& flag_value);

}  // namespace morphgan::cli
