// SPDX-License-Identifier: Apache-2.0
#include "mmrf/trajectory_log.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mmrf {

using nlohmann::json;

AspectVector RequestRecord::reward() const {
  AspectVector r{};
  for (const auto& f : feedback) {
    const AspectVector v = f.as_vector();
    for (int a = 0; a < kNumAspects; ++a) r[static_cast<std::size_t>(a)] += v[static_cast<std::size_t>(a)];
  }
  r[kHateAspect] = -r[kHateAspect];
  return r;
}

AspectVector SessionRecord::total_reward() const {
  AspectVector r{};
  for (const auto& q : requests) {
    const AspectVector v = q.reward();
    for (int a = 0; a < kNumAspects; ++a) r[static_cast<std::size_t>(a)] += v[static_cast<std::size_t>(a)];
  }
  return r;
}

namespace {

json feedback_json(const ItemFeedback& f) {
  return {{"click", f.click},     {"like", f.like},           {"follow", f.follow},
          {"comment", f.comment}, {"hate", f.hate},           {"long_view", f.long_view},
          {"watch_ratio", f.watch_ratio}, {"watch_time", f.watch_time}};
}

ItemFeedback feedback_from(const json& j) {
  ItemFeedback f;
  f.click = j.at("click").get<int>();
  f.like = j.at("like").get<int>();
  f.follow = j.at("follow").get<int>();
  f.comment = j.at("comment").get<int>();
  f.hate = j.at("hate").get<int>();
  f.long_view = j.at("long_view").get<int>();
  f.watch_ratio = j.at("watch_ratio").get<double>();
  f.watch_time = j.at("watch_time").get<double>();
  return f;
}

const json& field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw DataError(std::string("missing field '") + name + "'");
  return *it;
}

}  // namespace

std::string serialize_trajectory_log(const TrajectoryLog& log) {
  std::ostringstream out;
  json header = {{"schema", log.header.schema},
                 {"env_seed", log.header.env_seed},
                 {"catalog_hash", log.header.catalog_hash},
                 {"policy", log.header.policy}};
  out << header.dump() << "\n";
  for (const auto& s : log.sessions) {
    for (const auto& r : s.requests) {
      json fb = json::array();
      for (const auto& f : r.feedback) fb.push_back(feedback_json(f));
      json line = {{"session", s.session_id},   {"round", r.round},   {"state", r.state},
                   {"pool", r.pool},            {"scores", r.scores}, {"shown", r.shown},
                   {"propensities", r.propensities}, {"feedback", fb}, {"done", r.done}};
      out << line.dump() << "\n";
    }
  }
  return out.str();
}

TrajectoryLog parse_trajectory_log(const std::string& text) {
  std::istringstream in(text);
  TrajectoryLog log;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!have_header) {
        const auto schema = field(j, "schema").get<std::string>();
        if (schema != kTrajectorySchema) {
          throw DataError("schema version mismatch: expected " + std::string(kTrajectorySchema) + ", got " + schema);
        }
        log.header.schema = schema;
        log.header.env_seed = j.value("env_seed", std::uint64_t{0});
        log.header.catalog_hash = j.value("catalog_hash", std::uint64_t{0});
        log.header.policy = j.value("policy", std::string());
        have_header = true;
        continue;
      }
      RequestRecord r;
      const auto sid = field(j, "session").get<std::uint64_t>();
      r.round = field(j, "round").get<std::int64_t>();
      r.state = field(j, "state").get<std::vector<float>>();
      r.pool = field(j, "pool").get<std::vector<std::int64_t>>();
      r.scores = field(j, "scores").get<std::vector<float>>();
      r.shown = field(j, "shown").get<std::vector<std::int64_t>>();
      r.propensities = field(j, "propensities").get<std::vector<double>>();
      for (const auto& f : field(j, "feedback")) r.feedback.push_back(feedback_from(f));
      r.done = field(j, "done").get<bool>();
      if (r.propensities.size() != r.shown.size() || r.feedback.size() != r.shown.size()) {
        throw DataError("shown, propensities and feedback lengths differ");
      }
      if (r.scores.size() != r.pool.size()) throw DataError("scores and pool lengths differ");
      for (double p : r.propensities) {
        if (!(p > 0.0 && p <= 1.0)) throw DataError("propensity outside (0, 1]");
      }
      if (log.sessions.empty() || log.sessions.back().session_id != sid || log.sessions.back().requests.back().done) {
        log.sessions.push_back(SessionRecord{sid, {}});
      }
      log.sessions.back().requests.push_back(std::move(r));
    } catch (const DataError& e) {
      throw DataError("trajectory log line " + std::to_string(lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw DataError("trajectory log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header && lineno > 0) throw DataError("trajectory log: missing schema header");
  return log;
}

void write_trajectory_log(const TrajectoryLog& log, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  // No sessions, no bytes: an empty log is an empty file.
  if (!log.sessions.empty()) f << serialize_trajectory_log(log);
}

TrajectoryLog read_trajectory_log(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open trajectory log " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_trajectory_log(buf.str());
}

}  // namespace mmrf
