// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <utility>

#include "mmrf/optim.hpp"
#include "mmrf/param_store.hpp"

namespace mmrf {

inline constexpr const char* kCheckpointFormat = "mmrf-ckpt/1";

/// Writes `dir/manifest.json`, `dir/params.bin` and `dir/optstate.bin`.
/// Binary files hold contiguous little-endian float32 values; the manifest
/// lists names, shapes and float offsets in store order.
void save_checkpoint(const ParamStore& store, const OptState& opt, const std::filesystem::path& dir);

/// Inverse of save_checkpoint. Throws DataError on a missing or corrupt
/// manifest and on any shape or byte-count mismatch.
std::pair<ParamStore, OptState> load_checkpoint(const std::filesystem::path& dir);

}  // namespace mmrf
