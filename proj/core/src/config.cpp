// SPDX-License-Identifier: Apache-2.0
#include "mmrf/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "mmrf/toml_lite.hpp"

namespace mmrf {

namespace {

using toml::Value;

struct Field {
  std::string key;
  std::function<void(Config&, const Value&)> set;
  std::function<std::string(const Config&)> emit;
};

[[noreturn]] void type_error(const std::string& key, const Value& v, const char* expected) {
  throw ConfigError(key + ": expected " + expected + " (line " + std::to_string(v.line) + ")");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

double get_double(const std::string& key, const Value& v) {
  if (!v.is_number()) type_error(key, v, "a number");
  return v.as_double();
}

std::int64_t get_int(const std::string& key, const Value& v) {
  if (auto* i = std::get_if<std::int64_t>(&v.data)) return *i;
  type_error(key, v, "an integer");
}

template <class Block, class T>
Field num(std::string key, Block Config::*block, T Block::*member) {
  Field f;
  f.key = key;
  f.set = [key, block, member](Config& c, const Value& v) {
    if constexpr (std::is_floating_point_v<T>) {
      (c.*block).*member = get_double(key, v);
    } else {
      (c.*block).*member = static_cast<T>(get_int(key, v));
    }
  };
  f.emit = [block, member](const Config& c) {
    if constexpr (std::is_floating_point_v<T>) {
      return fmt_double((c.*block).*member);
    } else {
      return std::to_string((c.*block).*member);
    }
  };
  return f;
}

Field flag(std::string key, bool AgentsConfig::*member) {
  Field f;
  f.key = key;
  f.set = [key, member](Config& c, const Value& v) {
    auto* b = std::get_if<bool>(&v.data);
    if (!b) type_error(key, v, "a boolean");
    c.agents.*member = *b;
  };
  f.emit = [member](const Config& c) { return std::string(c.agents.*member ? "true" : "false"); };
  return f;
}

const std::string& get_string(const std::string& key, const Value& v) {
  auto* s = std::get_if<std::string>(&v.data);
  if (!s) type_error(key, v, "a string");
  return *s;
}

std::vector<Field> fields() {
  std::vector<Field> f;
  f.push_back({"seed",
               [](Config& c, const Value& v) {
                 const auto s = get_int("seed", v);
                 if (s < 0) throw ConfigError("seed: must be >= 0");
                 c.seed = static_cast<std::uint64_t>(s);
               },
               [](const Config& c) { return std::to_string(c.seed); }});

  f.push_back(num("env.n_items", &Config::env, &EnvConfig::n_items));
  f.push_back(num("env.pool_size", &Config::env, &EnvConfig::pool_size));
  f.push_back(num("env.k", &Config::env, &EnvConfig::k));
  f.push_back(num("env.horizon", &Config::env, &EnvConfig::horizon));
  f.push_back(num("env.dim", &Config::env, &EnvConfig::dim));
  f.push_back(num("env.kappa_pos", &Config::env, &EnvConfig::kappa_pos));
  f.push_back(num("env.kappa_hate", &Config::env, &EnvConfig::kappa_hate));
  f.push_back(num("env.leave_bias", &Config::env, &EnvConfig::leave_bias));
  f.push_back(num("env.leave_scale", &Config::env, &EnvConfig::leave_scale));
  f.push_back(num("env.long_view_threshold", &Config::env, &EnvConfig::long_view_threshold));
  f.push_back(num("env.profile_noise", &Config::env, &EnvConfig::profile_noise));
  f.push_back(num("env.user_spread", &Config::env, &EnvConfig::user_spread));

  f.push_back(num("agents.n_agents", &Config::agents, &AgentsConfig::n_agents));
  f.push_back(num("agents.encoder_hidden", &Config::agents, &AgentsConfig::encoder_hidden));
  f.push_back(num("agents.embed_dim", &Config::agents, &AgentsConfig::embed_dim));
  f.push_back(num("agents.attention_dim", &Config::agents, &AgentsConfig::attention_dim));
  f.push_back(num("agents.heads", &Config::agents, &AgentsConfig::heads));
  f.push_back(flag("agents.scaled_attention", &AgentsConfig::scaled_attention));
  f.push_back(num("agents.actor_hidden", &Config::agents, &AgentsConfig::actor_hidden));
  f.push_back(num("agents.critic_embed", &Config::agents, &AgentsConfig::critic_embed));
  f.push_back(num("agents.critic_hidden", &Config::agents, &AgentsConfig::critic_hidden));
  f.push_back(num("agents.action_bound", &Config::agents, &AgentsConfig::action_bound));
  f.push_back({"agents.collab",
               [](Config& c, const Value& v) {
                 try {
                   c.agents.collab = parse_collab_mode(get_string("agents.collab", v));
                 } catch (const ConfigError& e) {
                   throw ConfigError(std::string("agents.collab: ") + e.what());
                 }
               },
               [](const Config& c) { return toml::quote(std::string(collab_mode_name(c.agents.collab))); }});

  f.push_back(num("training.gamma", &Config::training, &TrainingConfig::gamma));
  f.push_back(num("training.critic_lr", &Config::training, &TrainingConfig::critic_lr));
  f.push_back(num("training.actor_lr", &Config::training, &TrainingConfig::actor_lr));
  f.push_back(num("training.aux_lr", &Config::training, &TrainingConfig::aux_lr));
  f.push_back(num("training.noise", &Config::training, &TrainingConfig::noise));
  f.push_back(num("training.action_l2", &Config::training, &TrainingConfig::action_l2));
  f.push_back(num("training.tau", &Config::training, &TrainingConfig::tau));
  f.push_back(num("training.batch_size", &Config::training, &TrainingConfig::batch_size));
  f.push_back(num("training.random_actions", &Config::training, &TrainingConfig::random_actions));
  f.push_back(num("training.nonimpression_rate", &Config::training, &TrainingConfig::nonimpression_rate));
  f.push_back(num("training.real_fraction", &Config::training, &TrainingConfig::real_fraction));
  f.push_back(num("training.buffer_capacity", &Config::training, &TrainingConfig::buffer_capacity));
  f.push_back(num("training.epochs", &Config::training, &TrainingConfig::epochs));
  f.push_back(num("training.sessions_per_epoch", &Config::training, &TrainingConfig::sessions_per_epoch));
  f.push_back(num("training.updates_per_epoch", &Config::training, &TrainingConfig::updates_per_epoch));
  f.push_back(num("training.plateau_patience", &Config::training, &TrainingConfig::plateau_patience));
  f.push_back({"training.nonimpression",
               [](Config& c, const Value& v) {
                 c.training.nonimpression = parse_nonimpression_mode(get_string("training.nonimpression", v));
               },
               [](const Config& c) {
                 return toml::quote(std::string(nonimpression_mode_name(c.training.nonimpression)));
               }});
  f.push_back(num("training.constant_reward", &Config::training, &TrainingConfig::constant_reward));
  f.push_back({"training.reward_scale",
               [](Config& c, const Value& v) {
                 auto* arr = std::get_if<toml::Array>(&v.data);
                 if (!arr || arr->size() != static_cast<std::size_t>(kNumAspects)) {
                   type_error("training.reward_scale", v, "an array of 7 numbers");
                 }
                 for (std::size_t a = 0; a < arr->size(); ++a) {
                   c.training.reward_scale[a] = get_double("training.reward_scale", (*arr)[a]);
                 }
               },
               [](const Config& c) {
                 std::string s = "[";
                 for (std::size_t a = 0; a < c.training.reward_scale.size(); ++a) {
                   if (a) s += ", ";
                   s += fmt_double(c.training.reward_scale[a]);
                 }
                 return s + "]";
               }});

  f.push_back(num("worldmodel.proj_dim", &Config::worldmodel, &WorldModelConfig::proj_dim));
  f.push_back(num("worldmodel.hidden", &Config::worldmodel, &WorldModelConfig::hidden));
  f.push_back(num("worldmodel.head_hidden", &Config::worldmodel, &WorldModelConfig::head_hidden));
  f.push_back(num("worldmodel.lambda", &Config::worldmodel, &WorldModelConfig::lambda));
  f.push_back(num("worldmodel.dropout", &Config::worldmodel, &WorldModelConfig::dropout));
  f.push_back(num("worldmodel.lr", &Config::worldmodel, &WorldModelConfig::lr));
  f.push_back(num("worldmodel.batch_sessions", &Config::worldmodel, &WorldModelConfig::batch_sessions));
  f.push_back(num("worldmodel.updates_per_epoch", &Config::worldmodel, &WorldModelConfig::updates_per_epoch));
  f.push_back(num("worldmodel.capacity_sessions", &Config::worldmodel, &WorldModelConfig::capacity_sessions));

  f.push_back(num("eval.cap", &Config::eval, &EvalConfig::cap));
  f.push_back(num("eval.temperature", &Config::eval, &EvalConfig::temperature));
  f.push_back(num("eval.episodes", &Config::eval, &EvalConfig::episodes));

  f.push_back(num("baseline.sessions", &Config::baseline, &BaselineConfig::sessions));
  f.push_back(num("baseline.logging_gain", &Config::baseline, &BaselineConfig::logging_gain));
  f.push_back(num("baseline.logging_noise", &Config::baseline, &BaselineConfig::logging_noise));
  Field bc_epochs{"baseline.bc_epochs",
                  [](Config& c, const Value& v) { c.baseline.bc.epochs = get_int("baseline.bc_epochs", v); },
                  [](const Config& c) { return std::to_string(c.baseline.bc.epochs); }};
  Field bc_lr{"baseline.bc_lr", [](Config& c, const Value& v) { c.baseline.bc.lr = get_double("baseline.bc_lr", v); },
              [](const Config& c) { return fmt_double(c.baseline.bc.lr); }};
  Field bc_l2{"baseline.bc_l2", [](Config& c, const Value& v) { c.baseline.bc.l2 = get_double("baseline.bc_l2", v); },
              [](const Config& c) { return fmt_double(c.baseline.bc.l2); }};
  f.push_back(std::move(bc_epochs));
  f.push_back(std::move(bc_lr));
  f.push_back(std::move(bc_l2));
  return f;
}

const std::vector<Field>& field_table() {
  static const std::vector<Field> table = fields();
  return table;
}

}  // namespace

void Config::validate() const {
  env.validate();
  agents.validate();
  training.validate();
  worldmodel.validate();
  eval.validate();
  baseline.bc.validate();
  if (baseline.sessions < 1) throw ConfigError("baseline.sessions: must be >= 1");
  if (!(baseline.logging_noise >= 0.0)) throw ConfigError("baseline.logging_noise: must be >= 0");
  if (training.batch_size > training.buffer_capacity) {
    throw ConfigError("training.batch_size: must not exceed training.buffer_capacity");
  }
}

void apply_preset(Config& config, std::string_view preset) {
  if (preset == "mmrf") {
    config.agents.collab = CollabMode::attention;
    config.training.nonimpression = NonImpressionMode::simulated;
  } else if (preset == "mmrf-co") {
    config.agents.collab = CollabMode::concat;
    config.training.nonimpression = NonImpressionMode::simulated;
  } else if (preset == "mmrf-da") {
    config.agents.collab = CollabMode::attention;
    config.training.nonimpression = NonImpressionMode::disabled;
  } else if (preset == "mmrf-ns") {
    config.agents.collab = CollabMode::attention;
    config.training.nonimpression = NonImpressionMode::constant;
  } else {
    throw ConfigError("preset: expected mmrf, mmrf-co, mmrf-da or mmrf-ns, got '" + std::string(preset) + "'");
  }
  config.preset = std::string(preset);
}

Config parse_config_text(const std::string& text, const std::optional<std::string>& preset_override) {
  const toml::Document doc = toml::parse(text);
  Config config;
  std::string preset = "mmrf";
  for (const auto& [key, value] : doc.entries) {
    if (key == "preset") preset = get_string("preset", value);
  }
  if (preset_override) preset = *preset_override;
  apply_preset(config, preset);

  const auto& table = field_table();
  for (const auto& [key, value] : doc.entries) {
    if (key == "preset") continue;
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) {
      throw ConfigError("unknown key '" + key + "' (line " + std::to_string(value.line) + ")");
    }
    it->set(config, value);
  }
  config.validate();
  return config;
}

Config parse_config(const std::filesystem::path& path, const std::optional<std::string>& preset_override) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  try {
    return parse_config_text(buf.str(), preset_override);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string emit_config(const Config& config) {
  std::ostringstream out;
  out << "preset = " << toml::quote(config.preset) << "\n";
  std::string current;
  for (const auto& f : field_table()) {
    const auto dot = f.key.find('.');
    const std::string table = dot == std::string::npos ? "" : f.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (table != current) {
      out << "\n[" << table << "]\n";
      current = table;
    }
    out << name << " = " << f.emit(config) << "\n";
  }
  return out.str();
}

std::string config_hash(const Config& config) {
  const std::string text = emit_config(config);
  const std::uint64_t h = Rng::hash_bytes(std::as_bytes(std::span<const char>(text.data(), text.size())));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mmrf
