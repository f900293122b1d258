// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "mmrf/agents.hpp"
#include "mmrf/env.hpp"
#include "mmrf/evalkit.hpp"
#include "mmrf/training.hpp"
#include "mmrf/worldmodel.hpp"

namespace mmrf {

/// Offline baseline settings: the logging policy that produces the
/// behaviour-cloning dataset and the size of that dataset.
struct BaselineConfig {
  std::int64_t sessions = 200;
  double logging_gain = 4.0;
  double logging_noise = 1.0;
  BcConfig bc;

  bool operator==(const BaselineConfig&) const = default;
};

struct Config {
  std::uint64_t seed = 42;
  std::string preset = "mmrf";
  EnvConfig env;
  AgentsConfig agents;
  TrainingConfig training;
  WorldModelConfig worldmodel;
  EvalConfig eval;
  BaselineConfig baseline;

  /// Per-block checks plus cross-field constraints.
  void validate() const;
  bool operator==(const Config&) const = default;
};

/// Applies mmrf | mmrf-co | mmrf-da | mmrf-ns on top of `config`.
void apply_preset(Config& config, std::string_view preset);

/// Defaults, then the preset (`preset_override` if set, otherwise the
/// file's `preset` key), then every explicit key. Unknown keys and type
/// mismatches raise ConfigError naming the key.
Config parse_config_text(const std::string& text, const std::optional<std::string>& preset_override = {});
Config parse_config(const std::filesystem::path& path, const std::optional<std::string>& preset_override = {});

/// Every key with its effective value; parsing the output yields an equal
/// Config.
std::string emit_config(const Config& config);

/// Hex digest of the emitted config.
std::string config_hash(const Config& config);

}  // namespace mmrf
