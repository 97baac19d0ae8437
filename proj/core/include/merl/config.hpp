#pragma once

// Experiment configuration. Files are `key = value` lines with `#`
// comments. Unset keys take the defaults for the chosen (task, algo) pair.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "merl/envs.hpp"
#include "merl/evolution.hpp"
#include "merl/learners.hpp"

namespace merl {

enum class Algorithm { Merl, Ea, Matd3, Maddpg, Mixed };
enum class RewardMode { Local, Global, Mixed };
enum class PreyPolicy { Ddpg, Flee, Static };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);
std::string to_string(RewardMode m);
RewardMode parse_reward_mode(const std::string& s);
std::string to_string(PreyPolicy p);
PreyPolicy parse_prey_policy(const std::string& s);

bool is_population_algo(Algorithm a);

struct ExperimentConfig {
  Algorithm algo = Algorithm::Merl;
  env::EnvConfig env;
  PreyPolicy prey_policy = PreyPolicy::Ddpg;

  Td3Hyper td3;
  std::vector<std::size_t> actor_hidden{100, 100};
  std::vector<std::size_t> critic_hidden{100, 100};
  std::size_t buffer_size = 1'000'000;
  double exploration_noise = 0.4;

  std::size_t pop_size = 10;
  EvolutionParams evolution;
  std::size_t rollouts_per_fitness = 10;
  /// Noisy episodes run by the policy-gradient team each generation.
  std::size_t rollout_size = 10;
  std::size_t pg_updates_per_generation = 1;
  std::size_t migration_period = 1;
  /// Minimum per-agent buffer size before gradient updates start.
  std::size_t learn_start = 1024;

  RewardMode reward_mode = RewardMode::Local;
  double mixed_weight = 10.0;
  std::size_t updates_per_step = 1;
  std::size_t eval_every_episodes = 10;

  std::uint64_t frame_budget = 1'000'000;
  std::uint64_t seed = 2019;
  std::size_t eval_instances = 10;
  std::uint64_t eval_seed_base = 2019;
  std::size_t checkpoint_every = 0;  // generations/evals between checkpoints; 0 = end only
  bool dump_trajectory = true;
  std::string out_dir = "runs/default";
  std::size_t workers = 1;

  /// Throws std::invalid_argument naming the key on any inconsistency.
  void validate() const;
};

enum class Source { Default, File, Flag };

struct ResolvedConfig {
  ExperimentConfig config;
  std::map<std::string, Source> provenance;

  /// `key = value  # source` for every key applicable to the task.
  std::string lockfile() const;
};

/// Ordered overrides; later entries win.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<Source> sources;

  void add(std::string key, std::string value, Source src);
};

/// Parses `key = value` text into overrides. Throws on malformed lines or unknown keys.
Overrides parse_config_text(const std::string& text, Source src = Source::File);
Overrides parse_config_file(const std::string& path);

/// Applies overrides on top of the (task, algo) defaults.
ResolvedConfig resolve_config(const Overrides& overrides);

/// Defaults for a task/algorithm pair.
ExperimentConfig default_config(env::Task task, Algorithm algo);

/// All recognised keys.
std::vector<std::string> config_keys();
/// Whether a key may be set for the given task.
bool key_applies(const std::string& key, env::Task task);

/// Every applicable key as `key = value` lines; resolve_config reads it back
/// to an identical config.
std::string dump_config(const ExperimentConfig& cfg);

/// Current value of a key, formatted the way the parser reads it back.
std::string config_value(const ExperimentConfig& cfg, const std::string& key);

}  // namespace merl
