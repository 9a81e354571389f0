#pragma once

// YAML experiment configuration. Every key is optional; an empty document
// yields the default learner and GA settings.
//
//   env: pendulum              # pendulum | reacher2d | pointmass | unit
//   env_params: {dt: 0.05}     # per-environment constant overrides
//   seed: 1
//   repeat: 1                  # baseline runs
//   out: runs/pendulum
//   genome: best.txt           # eval-genome input
//   ddpg:
//     gamma: 0.9
//     tau: 0.01
//     critic_lr: 0.002
//     actor_lr: 0.001
//     batch: 32
//     buffer_capacity: 10000
//     max_steps_per_episode: 2000
//     episodes: 200
//     noise_start: 3.0
//     noise_end: 0.0
//     beta: 1.0
//     critic_hidden: 50
//     actor_hidden: 30
//     optimizer: adam          # adam | sgd
//     grad_clip: 10.0
//     amr_bounded: false
//   ga:
//     population: 10
//     elite: 5
//     generations: 75
//     mutation_rate: 0.25
//     mutation_range: 0.1
//     episodes_per_eval: 200
//     seeds_per_genome: 1
//     init_range: 1.0
//     matched_baseline: false
//     workers: 1

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <functional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "amrl/ddpg.hpp"
#include "amrl/envs.hpp"
#include "amrl/error.hpp"
#include "amrl/evolution.hpp"

namespace amrl {

enum class Mode { baseline, evolve, eval_genome };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::baseline: return "baseline";
    case Mode::evolve: return "evolve";
    case Mode::eval_genome: return "eval-genome";
  }
  return "?";
}

struct ExperimentConfig {
  std::string env = "pendulum";
  EnvParams env_params;
  Hyperparams hp;
  GaConfig ga;
  Mode mode = Mode::baseline;
  std::uint64_t master_seed = 1;
  std::string out_dir = "amrl_out";
  std::size_t repeat = 1;
  std::string genome_path;

  void validate() const {
    env_factory(env, env_params);
    hp.validate();
    ga.validate();
    require(repeat > 0, "repeat must be positive");
  }
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

template <typename T>
T scalar_as(const YAML::Node& n, std::string_view key) {
  if (!n.IsScalar()) throw ConfigError(concat("'", key, "' must be a scalar"), line_of(n));
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(concat("'", key, "' has invalid value '", n.Scalar(), "'"), line_of(n));
  }
}

// Reads optional `key` from map `m` into `dst`, enforcing `ok`.
template <typename T, typename Pred>
void read_field(const YAML::Node& m, std::string_view key, T& dst, Pred ok, std::string_view constraint,
                std::set<std::string>& seen) {
  seen.insert(std::string(key));
  const YAML::Node n = m[std::string(key)];
  if (!n) return;
  T v;
  if constexpr (std::is_same_v<T, std::size_t>) {
    const auto raw = scalar_as<long long>(n, key);
    if (raw < 0) throw ConfigError(concat("'", key, "' must be non-negative"), line_of(n));
    v = static_cast<std::size_t>(raw);
  } else {
    v = scalar_as<T>(n, key);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError(concat("'", key, "' must be finite"), line_of(n));
  }
  if (!ok(v)) throw ConfigError(concat("'", key, "' ", constraint), line_of(n));
  dst = v;
}

inline void reject_unknown(const YAML::Node& m, const std::set<std::string>& known, std::string_view section) {
  for (const auto& kv : m) {
    const auto key = kv.first.as<std::string>();
    if (!known.count(key))
      throw ConfigError(concat("unknown key '", key, "'", section.empty() ? "" : " in section '", section,
                               section.empty() ? "" : "'"),
                        line_of(kv.first));
  }
}

inline int line_or_zero(const YAML::Node& m, const char* key) { return m[key] ? line_of(m[key]) : 0; }

}  // namespace detail

inline ExperimentConfig config_from_yaml(const YAML::Node& root, Mode mode = Mode::baseline) {
  using detail::read_field;
  ExperimentConfig c;
  c.mode = mode;
  if (!root || root.IsNull()) return c;
  if (!root.IsMap()) throw ConfigError("top level must be a mapping", detail::line_of(root));

  auto any = [](const auto&) { return true; };
  auto positive = [](auto v) { return v > 0; };
  auto non_negative = [](double v) { return v >= 0.0; };
  std::set<std::string> top;

  read_field(root, "env", c.env, any, "", top);
  if (root["env"]) {
    const auto names = env_names();
    if (std::find(names.begin(), names.end(), c.env) == names.end())
      throw ConfigError("unknown environment '" + c.env + "'", detail::line_of(root["env"]));
  }
  read_field(root, "seed", c.master_seed, any, "", top);
  read_field(root, "repeat", c.repeat, positive, "must be positive", top);
  read_field(root, "out", c.out_dir, [](const std::string& s) { return !s.empty(); }, "must not be empty", top);
  read_field(root, "genome", c.genome_path, any, "", top);

  top.insert("env_params");
  if (const auto ep = root["env_params"]) {
    if (!ep.IsMap()) throw ConfigError("'env_params' must be a mapping", detail::line_of(ep));
    auto probe = make_env(c.env);
    for (const auto& kv : ep) {
      const auto key = kv.first.as<std::string>();
      const double v = detail::scalar_as<double>(kv.second, key);
      try {
        probe->set_param(key, v);
      } catch (const ContractError& e) {
        throw ConfigError(e.what(), detail::line_of(kv.first));
      }
      c.env_params[key] = v;
    }
  }

  top.insert("ddpg");
  if (const auto d = root["ddpg"]) {
    if (!d.IsMap()) throw ConfigError("'ddpg' must be a mapping", detail::line_of(d));
    std::set<std::string> k;
    auto& hp = c.hp;
    read_field(d, "gamma", hp.gamma, [](double v) { return v >= 0.0 && v < 1.0; }, "must lie in [0, 1)", k);
    read_field(d, "tau", hp.tau, [](double v) { return v > 0.0 && v <= 1.0; }, "must lie in (0, 1]", k);
    read_field(d, "critic_lr", hp.critic_lr, positive, "must be positive", k);
    read_field(d, "actor_lr", hp.actor_lr, positive, "must be positive", k);
    read_field(d, "batch", hp.batch, positive, "must be positive", k);
    read_field(d, "buffer_capacity", hp.buffer_capacity, positive, "must be positive", k);
    read_field(d, "max_steps_per_episode", hp.max_steps_per_episode, positive, "must be positive", k);
    read_field(d, "episodes", hp.episodes, positive, "must be positive", k);
    read_field(d, "noise_start", hp.noise_start, non_negative, "must be >= 0", k);
    read_field(d, "noise_end", hp.noise_end, non_negative, "must be >= 0", k);
    read_field(d, "beta", hp.beta, any, "", k);
    read_field(d, "critic_hidden", hp.critic_hidden, positive, "must be positive", k);
    read_field(d, "actor_hidden", hp.actor_hidden, positive, "must be positive", k);
    std::string opt = hp.optimizer == OptimizerKind::adam ? "adam" : "sgd";
    read_field(d, "optimizer", opt, [](const std::string& s) { return s == "adam" || s == "sgd"; },
               "must be 'adam' or 'sgd'", k);
    hp.optimizer = opt == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
    read_field(d, "grad_clip", hp.grad_clip, any, "", k);
    read_field(d, "amr_bounded", hp.amr_bounded, any, "", k);
    detail::reject_unknown(d, k, "ddpg");
    if (hp.buffer_capacity < hp.batch)
      throw ConfigError("'buffer_capacity' must be at least 'batch'",
                        std::max(detail::line_or_zero(d, "buffer_capacity"), detail::line_or_zero(d, "batch")));
  }

  top.insert("ga");
  if (const auto g = root["ga"]) {
    if (!g.IsMap()) throw ConfigError("'ga' must be a mapping", detail::line_of(g));
    std::set<std::string> k;
    auto& ga = c.ga;
    read_field(g, "population", ga.population, positive, "must be positive", k);
    read_field(g, "elite", ga.elite, positive, "must be positive", k);
    read_field(g, "generations", ga.generations, positive, "must be positive", k);
    read_field(g, "mutation_rate", ga.mutation_rate, [](double v) { return v >= 0.0 && v <= 1.0; },
               "must lie in [0, 1]", k);
    read_field(g, "mutation_range", ga.mutation_range, positive, "must be positive", k);
    read_field(g, "episodes_per_eval", ga.episodes_per_eval, positive, "must be positive", k);
    read_field(g, "seeds_per_genome", ga.seeds_per_genome, positive, "must be positive", k);
    read_field(g, "init_range", ga.init_range, positive, "must be positive", k);
    read_field(g, "matched_baseline", ga.matched_baseline, any, "", k);
    read_field(g, "workers", ga.workers, positive, "must be positive", k);
    detail::reject_unknown(g, k, "ga");
    const int line = std::max(detail::line_or_zero(g, "elite"), detail::line_or_zero(g, "population"));
    if (ga.elite > ga.population) throw ConfigError("'elite' must not exceed 'population'", line);
    if (ga.elite < 2 && ga.elite < ga.population)
      throw ConfigError("'elite' must be >= 2 when offspring are bred", line);
  }

  detail::reject_unknown(root, top, "");
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path, Mode mode = Mode::baseline) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read config file '" + path + "'");
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1);
  }
  return config_from_yaml(root, mode);
}

inline ExperimentConfig parse_config(const std::string& text, Mode mode = Mode::baseline) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1);
  }
  return config_from_yaml(root, mode);
}

// Resolved configuration, written into every run manifest.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["env"] = c.env;
  j["env_params"] = c.env_params;
  j["seed"] = c.master_seed;
  j["repeat"] = c.repeat;
  j["mode"] = to_string(c.mode);
  if (!c.genome_path.empty()) j["genome"] = c.genome_path;
  const auto& hp = c.hp;
  j["ddpg"] = {{"gamma", hp.gamma},
               {"tau", hp.tau},
               {"critic_lr", hp.critic_lr},
               {"actor_lr", hp.actor_lr},
               {"batch", hp.batch},
               {"buffer_capacity", hp.buffer_capacity},
               {"max_steps_per_episode", hp.max_steps_per_episode},
               {"episodes", hp.episodes},
               {"noise_start", hp.noise_start},
               {"noise_end", hp.noise_end},
               {"beta", hp.beta},
               {"critic_hidden", hp.critic_hidden},
               {"actor_hidden", hp.actor_hidden},
               {"optimizer", hp.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
               {"grad_clip", hp.grad_clip},
               {"amr_bounded", hp.amr_bounded}};
  const auto& ga = c.ga;
  j["ga"] = {{"population", ga.population},
             {"elite", ga.elite},
             {"generations", ga.generations},
             {"mutation_rate", ga.mutation_rate},
             {"mutation_range", ga.mutation_range},
             {"episodes_per_eval", ga.episodes_per_eval},
             {"seeds_per_genome", ga.seeds_per_genome},
             {"init_range", ga.init_range},
             {"matched_baseline", ga.matched_baseline},
             {"workers", ga.workers}};
  return j;
}

}  // namespace amrl
