// SPDX-License-Identifier: Apache-2.0
// mmrf: train, evaluate, simulate and inspect multi-agent ranking policies.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "mmrf/checkpoint.hpp"
#include "mmrf/run.hpp"
#include "spdlog/sinks/stdout_color_sinks.h"
#include "spdlog/spdlog.h"

namespace {

using namespace mmrf;

struct Common {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

Config load_config(const Common& c) {
  std::optional<std::string> preset;
  if (!c.preset.empty()) preset = c.preset;
  Config cfg = c.config_path.empty() ? parse_config_text("", preset) : parse_config(c.config_path, preset);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("mmrf");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("MMRF_LOG");
  const std::string l = level ? level : "info";
  if (l == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (l == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

Environment make_env(const Config& cfg) { return Environment(cfg.env, cfg.seed); }

TrajectoryLog logging_dataset(const Environment& env, const Config& cfg, int threads) {
  HeuristicPolicy logger(cfg.env.dim, cfg.baseline.logging_gain, cfg.baseline.logging_noise, cfg.seed);
  return simulate_log(env, logger, cfg.baseline.sessions, Rng(cfg.seed).split("logging"), threads);
}

void check_dataset(const TrajectoryLog& log, const Environment& env) {
  if (!log.sessions.empty() && log.header.catalog_hash != env.catalog_hash()) {
    throw DataError("dataset was recorded against a different item catalog (env seed " +
                    std::to_string(log.header.env_seed) + ")");
  }
}

// ---------------------------------------------------------------------------

int cmd_train(const Common& common, const std::string& out) {
  Config cfg = load_config(common);
  const Environment env = make_env(cfg);
  spdlog::info("training preset {} seed {} for up to {} epochs", cfg.preset, cfg.seed, cfg.training.epochs);
  TrainingResult res = train(env, cfg.agents, cfg.worldmodel, cfg.training, cfg.seed, common.threads,
                             [](const EpochMetrics& m) {
                               spdlog::debug("epoch {} watchtime {:.2f} rounds {:.2f} wm_loss {:.4f}", m.epoch,
                                             m.returns[kWatchAspect], m.mean_rounds, m.wm_loss);
                             });
  res.report.preset = cfg.preset;
  const std::filesystem::path dir(out);
  save_run(dir, cfg, res.bundle, res.model, res.opt);
  write_file(dir / "report.json", res.report.to_json());
  write_file(dir / "metrics.csv", res.report.to_csv());
  spdlog::info("wrote checkpoint and report to {}", dir.string());
  return 0;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& dataset_path,
             const std::string& policy_name, std::optional<std::int64_t> episodes, const std::string& report_path,
             const std::string& csv_path) {
  std::optional<Run> run;
  Config cfg;
  if (!checkpoint.empty()) {
    run = load_run(checkpoint);
    cfg = run->config;
    if (common.seed) cfg.seed = *common.seed;
  } else {
    cfg = load_config(common);
  }
  const Environment env = make_env(cfg);
  std::optional<TrajectoryLog> dataset;
  if (!dataset_path.empty()) {
    dataset = read_trajectory_log(dataset_path);
    check_dataset(*dataset, env);
  }

  std::unique_ptr<Policy> policy;
  const std::string name = policy_name.empty() ? (run ? "checkpoint" : "random") : policy_name;
  if (name == "checkpoint") {
    if (!run) throw ConfigError("--policy checkpoint requires --checkpoint");
    policy = std::make_unique<AgentPolicy>(run->bundle);
  } else if (name == "random") {
    policy = std::make_unique<RandomPolicy>(0);
  } else if (name == "heuristic") {
    policy = std::make_unique<HeuristicPolicy>(cfg.env.dim, cfg.baseline.logging_gain, cfg.baseline.logging_noise,
                                               cfg.seed);
  } else if (name == "bc") {
    const TrajectoryLog train_set = dataset ? *dataset : logging_dataset(env, cfg, common.threads);
    policy = std::make_unique<BCPolicy>(train_bc(train_set, cfg.baseline.bc, env.catalog()).policy);
  } else {
    throw ConfigError("--policy: expected checkpoint, random, heuristic or bc, got '" + name + "'");
  }

  EvalReport report;
  report.policy = name;
  report.seed = cfg.seed;
  report.config_hash = config_hash(cfg);
  if (dataset) {
    report.episodes = static_cast<std::int64_t>(dataset->sessions.size());
    const NcisResult n = ncis(*dataset, env.catalog(), *policy, cfg.eval.cap, cfg.eval.temperature);
    report.metrics["ncis"] = n.value;
    AspectVector g{};
    const auto ga = gauc(*dataset, env.catalog(), *policy);
    for (int a = 0; a < kNumAspects; ++a) {
      g[static_cast<std::size_t>(a)] = ga[static_cast<std::size_t>(a)].value;
      if (ga[static_cast<std::size_t>(a)].skipped > 0) {
        report.notes.push_back("gauc " + std::string(aspect_name(a)) + ": skipped " +
                               std::to_string(ga[static_cast<std::size_t>(a)].skipped) + " sessions with constant labels");
      }
    }
    report.metrics["gauc"] = g;
    AspectVector logged{};
    for (const auto& s : dataset->sessions) {
      const AspectVector r = s.total_reward();
      for (int a = 0; a < kNumAspects; ++a) logged[static_cast<std::size_t>(a)] += r[static_cast<std::size_t>(a)];
    }
    for (auto& v : logged) v /= static_cast<double>(dataset->sessions.size());
    report.metrics["logged_return"] = logged;
  } else {
    const std::int64_t n = episodes.value_or(cfg.eval.episodes);
    report.episodes = n;
    const OnlineResult r = evaluate_online(env, *policy, n, Rng(cfg.seed).split("heldout"), cfg.training.gamma,
                                           common.threads);
    report.metrics["return"] = r.returns;
    report.metrics["discounted_return"] = r.discounted;
  }
  const std::string json = report.to_json();
  if (report_path.empty()) {
    std::cout << json;
  } else {
    write_file(report_path, json);
  }
  if (!csv_path.empty()) write_file(csv_path, report.to_csv());
  spdlog::info("evaluated policy {} over {} sessions", name, report.episodes);
  return 0;
}

int cmd_simulate(const Common& common, const std::string& policy_name, const std::string& checkpoint,
                 const std::string& dataset_path, std::int64_t episodes, const std::string& log_path) {
  std::optional<Run> run;
  Config cfg;
  if (!checkpoint.empty()) {
    run = load_run(checkpoint);
    cfg = run->config;
    if (common.seed) cfg.seed = *common.seed;
  } else {
    cfg = load_config(common);
  }
  const Environment env = make_env(cfg);
  std::unique_ptr<Policy> policy;
  if (policy_name == "random") {
    policy = std::make_unique<RandomPolicy>(0);
  } else if (policy_name == "heuristic") {
    policy = std::make_unique<HeuristicPolicy>(cfg.env.dim, cfg.baseline.logging_gain, cfg.baseline.logging_noise,
                                               cfg.seed);
  } else if (policy_name == "checkpoint") {
    if (!run) throw ConfigError("--policy checkpoint requires --checkpoint");
    policy = std::make_unique<AgentPolicy>(run->bundle);
  } else if (policy_name == "bc") {
    TrajectoryLog train_set;
    if (!dataset_path.empty()) {
      train_set = read_trajectory_log(dataset_path);
      check_dataset(train_set, env);
    } else {
      train_set = logging_dataset(env, cfg, common.threads);
    }
    policy = std::make_unique<BCPolicy>(train_bc(train_set, cfg.baseline.bc, env.catalog()).policy);
  } else {
    throw ConfigError("--policy: expected random, heuristic, bc or checkpoint, got '" + policy_name + "'");
  }
  const TrajectoryLog log = simulate_log(env, *policy, episodes, Rng(cfg.seed).split("simulate"), common.threads);
  write_trajectory_log(log, log_path);
  spdlog::info("wrote {} sessions to {}", log.sessions.size(), log_path);
  return 0;
}

/// "agent.{i}.{module}.*" for agent tensors, the first component otherwise;
/// target copies keep their "target." prefix.
std::string namespace_of(const std::string& name) {
  std::string rest = name;
  std::string prefix;
  if (starts_with(rest, "target.")) {
    prefix = "target.";
    rest.erase(0, prefix.size());
  }
  const int parts = starts_with(rest, "agent.") ? 3 : 1;
  std::size_t end = rest.find('.');
  for (int i = 1; i < parts && end != std::string::npos; ++i) end = rest.find('.', end + 1);
  return prefix + rest.substr(0, end) + ".*";
}

int cmd_inspect(const std::string& checkpoint) {
  if (!std::filesystem::is_directory(checkpoint)) throw DataError("checkpoint directory " + checkpoint + " does not exist");
  const auto [store, opt] = load_checkpoint(checkpoint);
  std::map<std::string, std::pair<std::size_t, std::int64_t>> spaces;
  for (const auto& [name, t] : store) {
    auto& [count, floats] = spaces[namespace_of(name)];
    ++count;
    floats += t.numel();
  }
  std::cout << "checkpoint " << checkpoint << " (" << kCheckpointFormat << ", f32le)\n";
  std::cout << "namespaces:\n";
  for (const auto& [ns, v] : spaces) std::cout << "  " << ns << "  tensors=" << v.first << " floats=" << v.second << "\n";
  std::cout << "parameters:\n";
  for (const auto& [name, t] : store) std::cout << "  " << name << " " << shape_str(t.shape()) << "\n";
  std::cout << "optimizer groups:\n";
  for (const auto& [name, g] : opt.groups) std::cout << "  " << name << " step=" << g.t << " tensors=" << g.m.size() << "\n";
  std::cout << "total parameters: " << store.total_numel() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmrf: multi-agent ranking with a learned feedback simulator"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed_value = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "TOML configuration file");
    sub->add_option("--preset", common.preset, "mmrf | mmrf-co | mmrf-da | mmrf-ns");
    sub->add_option("--seed", seed_value, "Master seed (overrides the config)");
    sub->add_option("--threads", common.threads, "Worker threads for rollouts")->check(CLI::PositiveNumber);
  };

  std::string out, checkpoint, dataset, policy, report, csv, log;
  std::int64_t episodes = 0;

  auto* train_cmd = app.add_subcommand("train", "Train agents and world model");
  add_common(train_cmd);
  train_cmd->add_option("--out", out, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy offline or in fresh simulation");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  eval_cmd->add_option("--dataset", dataset, "Logged trajectories (NDJSON)");
  eval_cmd->add_option("--policy", policy, "checkpoint | random | heuristic | bc");
  auto* eval_episodes = eval_cmd->add_option("--episodes", episodes, "Fresh sessions to simulate")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--report", report, "Report path (JSON); stdout if omitted");
  eval_cmd->add_option("--csv", csv, "Aspect table (CSV)");

  auto* sim_cmd = app.add_subcommand("simulate", "Record trajectories of a policy");
  add_common(sim_cmd);
  sim_cmd->add_option("--policy", policy, "random | heuristic | bc | checkpoint")->required();
  sim_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  sim_cmd->add_option("--dataset", dataset, "Dataset to fit the bc policy on");
  sim_cmd->add_option("--episodes", episodes, "Sessions to record")->required()->check(CLI::PositiveNumber);
  sim_cmd->add_option("--log", log, "Output trajectory log")->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "List checkpoint parameters");
  inspect_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  setup_logging();
  try {
    for (auto* sub : {train_cmd, eval_cmd, sim_cmd}) {
      if (sub->parsed() && sub->count("--seed") > 0) common.seed = seed_value;
    }
    if (eval_cmd->parsed() && !dataset.empty() && eval_episodes->count() > 0) {
      throw ConfigError("--episodes and --dataset are mutually exclusive");
    }
    if (train_cmd->parsed()) return cmd_train(common, out);
    if (eval_cmd->parsed()) {
      std::optional<std::int64_t> ep;
      if (eval_episodes->count() > 0) ep = episodes;
      return cmd_eval(common, checkpoint, dataset, policy, ep, report, csv);
    }
    if (sim_cmd->parsed()) return cmd_simulate(common, policy, checkpoint, dataset, episodes, log);
    if (inspect_cmd->parsed()) return cmd_inspect(checkpoint);
  } catch (const mmrf::Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 4;
  }
  return 0;
}
