// SPDX-License-Identifier: Apache-2.0
#include "mmrf/run.hpp"

#include <fstream>

#include "mmrf/checkpoint.hpp"

namespace mmrf {

namespace {

const std::string kWorldModelGroup = "worldmodel";

void adopt(ParamStore& dst, const ParamStore& src, const std::string& what) {
  for (const auto& [name, t] : dst) {
    if (!src.contains(name)) throw DataError("checkpoint lacks " + what + " parameter '" + name + "'");
    if (src.at(name).shape() != t.shape()) {
      throw DataError("checkpoint parameter '" + name + "' has shape " + shape_str(src.at(name).shape()) +
                      ", configuration implies " + shape_str(t.shape()));
    }
  }
  for (const auto& [name, _] : dst) dst.set(name, src.at(name));
}

}  // namespace

void save_run(const std::filesystem::path& dir, const Config& config, const AgentBundle& bundle,
              const WorldModel& model, const OptState& opt) {
  std::filesystem::create_directories(dir);
  ParamStore all = bundle.params;
  all.merge(model.params);
  OptState groups = opt;
  groups.groups[kWorldModelGroup] = model.opt;
  save_checkpoint(all, groups, dir);
  std::ofstream f(dir / "config.toml", std::ios::trunc);
  if (!f) throw Error("cannot write " + (dir / "config.toml").string());
  f << emit_config(config);
}

Run load_run(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("checkpoint directory " + dir.string() + " does not exist");
  const auto cfg_path = dir / "config.toml";
  if (!std::filesystem::exists(cfg_path)) throw DataError("checkpoint is missing config.toml");
  Run run;
  run.config = parse_config(cfg_path);
  auto [store, opt] = load_checkpoint(dir);
  const std::int64_t state_dim = state_feature_dim(run.config.env.dim);
  Rng scratch(0);
  run.bundle = std::make_shared<AgentBundle>(run.config.agents, state_dim, run.config.env.dim, scratch);
  run.model = std::make_shared<WorldModel>(run.config.worldmodel, state_dim, run.config.env.dim, scratch);
  adopt(run.bundle->params, store, "agent");
  adopt(run.model->params, store, "world-model");
  if (auto it = opt.groups.find(kWorldModelGroup); it != opt.groups.end()) {
    run.model->opt = it->second;
    opt.groups.erase(it);
  }
  run.opt = std::move(opt);
  return run;
}

}  // namespace mmrf
