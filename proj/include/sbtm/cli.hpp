#pragma once

#include <string>

#include "sbtm/config.hpp"

namespace sbtm {

/// Sample matrices cross the CLI boundary as plain CSV with one row per
/// sample (the transpose of the internal column-major layout).
void write_samples_csv(const std::string& path, const Matrix& X);
Matrix read_samples_csv(const std::string& path);  // returns dim x n

/// Full command-line entry point (subcommands: solve, sde, noisefree,
/// baseline-sde-train, oracle, density, kde, diagnose, presets). Returns the
/// process exit code; every error path prints a message and returns nonzero.
int run_main(int argc, const char* const* argv);

}  // namespace sbtm
