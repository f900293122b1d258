// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>

#include "mmrf/config.hpp"

namespace mmrf {

/// A trained system as stored on disk: the checkpoint files plus the
/// effective configuration in `config.toml`.
struct Run {
  Config config;
  std::shared_ptr<AgentBundle> bundle;
  std::shared_ptr<WorldModel> model;
  OptState opt;
};

void save_run(const std::filesystem::path& dir, const Config& config, const AgentBundle& bundle,
              const WorldModel& model, const OptState& opt);
/// DataError when files are missing or the stored tensors do not match
/// the shapes the stored configuration implies.
Run load_run(const std::filesystem::path& dir);

}  // namespace mmrf
