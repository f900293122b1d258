// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mmrf/env.hpp"

namespace mmrf {

inline constexpr const char* kTrajectorySchema = "mmrf-traj/1";

/// One ranking request as logged. Feedback exists for shown items only;
/// the rest of the pool carries none.
struct RequestRecord {
  std::int64_t round = 0;
  std::vector<float> state;
  std::vector<std::int64_t> pool;
  std::vector<float> scores;          // behavior policy scores, pool order
  std::vector<std::int64_t> shown;
  std::vector<double> propensities;   // per shown item, Plackett-Luce stage probabilities
  std::vector<ItemFeedback> feedback; // per shown item
  bool done = false;

  AspectVector reward() const;        // per-aspect sums, hate negated
  bool operator==(const RequestRecord&) const = default;
};

struct SessionRecord {
  std::uint64_t session_id = 0;
  std::vector<RequestRecord> requests;

  AspectVector total_reward() const;
  bool operator==(const SessionRecord&) const = default;
};

struct LogHeader {
  std::string schema = kTrajectorySchema;
  std::uint64_t env_seed = 0;
  std::uint64_t catalog_hash = 0;
  std::string policy;
  bool operator==(const LogHeader&) const = default;
};

struct TrajectoryLog {
  LogHeader header;
  std::vector<SessionRecord> sessions;
  bool operator==(const TrajectoryLog&) const = default;
};

/// Header line followed by one JSON object per request.
void write_trajectory_log(const TrajectoryLog& log, const std::filesystem::path& path);
/// Throws DataError carrying the 1-based line number of the first bad line.
TrajectoryLog read_trajectory_log(const std::filesystem::path& path);

std::string serialize_trajectory_log(const TrajectoryLog& log);
TrajectoryLog parse_trajectory_log(const std::string& text);

}  // namespace mmrf
