#pragma once

// Scenario configs, presets and the artifact-producing runner behind reqmem_sim.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace reqmem::scenario {

enum class Kind { ple, lifetime, holeburn, hole_decay, echo2, echo3, afc, afc_sweep, fit };

std::string_view to_string(Kind kind);
bool is_stochastic(Kind kind);

std::string_view toolkit_version();

struct Scenario {
  Kind kind = Kind::ple;
  /// Effective configuration (after overrides) that is hashed into the manifest.
  nlohmann::json config;
  std::optional<std::uint64_t> seed;
  /// Relative data paths in the config resolve against this directory.
  std::filesystem::path base_dir;
};

/// Parses and fully validates a config document. Throws ConfigError naming the
/// offending field.
Scenario parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {},
                      std::optional<std::uint64_t> seed_override = std::nullopt);
Scenario load_config(const std::filesystem::path& path,
                     std::optional<std::uint64_t> seed_override = std::nullopt);

std::vector<std::string> preset_names();
/// Throws ConfigError for unknown names.
nlohmann::json preset_config(const std::string& name);

struct RunOutput {
  /// (file name, content) in write order; manifest.json is last.
  std::vector<std::pair<std::string, std::string>> artifacts;
  /// Derived scalars, also stored under "derived" in the manifest.
  nlohmann::json derived;
  nlohmann::json manifest;
};

RunOutput execute(const Scenario& scenario);

/// Writes every artifact into out_dir (created if needed). Files written by this
/// call are removed again if any write fails.
void write_outputs(const RunOutput& output, const std::filesystem::path& out_dir);

/// 64-bit FNV-1a of the text, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace reqmem::scenario
