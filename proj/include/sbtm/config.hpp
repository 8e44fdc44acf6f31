#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sbtm/engine.hpp"

namespace sbtm {

inline constexpr const char* kProjectVersion = "0.1.0";

/// Flat dotted-key configuration. Keys are validated against a fixed table
/// (unknown keys and malformed values are errors naming the key); values are
/// stored as text and converted by the typed getters.
struct RunConfig {
  std::map<std::string, std::string> kv;

  bool has(const std::string& key) const;
  std::string str(const std::string& key) const;
  double num(const std::string& key) const;
  int integer(const std::string& key) const;
  std::uint64_t uint(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;  // comma-separated
  std::vector<Index> indices(const std::string& key) const;
};

/// All documented keys at their global defaults (system-specific keys unset).
RunConfig run_config_defaults();

/// Validate a key/value pair and store it. Throws on unknown keys or values
/// that do not parse as the key's type.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// Named experiment presets layered over the defaults.
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// `key = value` lines over `base`; '#' starts a comment; strict keys.
RunConfig parse_config_text(const std::string& text, RunConfig base);
RunConfig parse_config_file(const std::string& path, RunConfig base);

/// Fill derived entries: system-appropriate score architecture defaults and
/// the sample-budget rule (run.n = 0 expands to n N dbar = 1e5).
RunConfig resolve(RunConfig cfg);

/// Everything needed to drive the engine, assembled from a resolved config.
/// The oracle members are set for systems with an analytic Gaussian solution
/// and back the hooks' score callback.
struct BuiltRun {
  RunConfig resolved;
  SystemSpec sys;
  std::unique_ptr<ScoreModel> model;
  EngineConfig engine;
  OracleHooks hooks;
  std::shared_ptr<HarmonicPath> harmonic_oracle;
  std::shared_ptr<GaussianPath> ou_oracle;
  std::string out_dir;
};

BuiltRun build_run(const RunConfig& cfg);

/// Sorted `key = value` snapshot of a config (the config.resolved format).
std::string resolved_text(const RunConfig& cfg);

/// Run manifest: config snapshot, seed, toolchain versions, wall time, and a
/// status that stays "incomplete" until the run finishes.
void write_manifest(const std::string& dir, const RunConfig& cfg, const std::string& status,
                    double wall_seconds);
RunConfig read_manifest_config(const std::string& path);

}  // namespace sbtm
