#include "merl/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace merl {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Merl:
      return "merl";
    case Algorithm::Ea:
      return "ea";
    case Algorithm::Matd3:
      return "matd3";
    case Algorithm::Maddpg:
      return "maddpg";
    case Algorithm::Mixed:
      return "mixed";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "merl") return Algorithm::Merl;
  if (s == "ea") return Algorithm::Ea;
  if (s == "matd3") return Algorithm::Matd3;
  if (s == "maddpg") return Algorithm::Maddpg;
  if (s == "mixed") return Algorithm::Mixed;
  throw std::invalid_argument("algo: unknown algorithm '" + s + "' (expected merl, ea, matd3, maddpg or mixed)");
}

std::string to_string(RewardMode m) {
  switch (m) {
    case RewardMode::Local:
      return "local";
    case RewardMode::Global:
      return "global";
    case RewardMode::Mixed:
      return "mixed";
  }
  return "unknown";
}

RewardMode parse_reward_mode(const std::string& s) {
  if (s == "local") return RewardMode::Local;
  if (s == "global") return RewardMode::Global;
  if (s == "mixed") return RewardMode::Mixed;
  throw std::invalid_argument("reward_mode: expected local, global or mixed, got '" + s + "'");
}

std::string to_string(PreyPolicy p) {
  switch (p) {
    case PreyPolicy::Ddpg:
      return "ddpg";
    case PreyPolicy::Flee:
      return "flee";
    case PreyPolicy::Static:
      return "static";
  }
  return "unknown";
}

PreyPolicy parse_prey_policy(const std::string& s) {
  if (s == "ddpg") return PreyPolicy::Ddpg;
  if (s == "flee") return PreyPolicy::Flee;
  if (s == "static") return PreyPolicy::Static;
  throw std::invalid_argument("prey_policy: expected ddpg, flee or static, got '" + s + "'");
}

bool is_population_algo(Algorithm a) { return a == Algorithm::Merl || a == Algorithm::Ea; }

namespace {

using env::Task;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw std::invalid_argument(key + ": invalid value '" + value + "' (" + why + ")");
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) bad_value(key, s, "expected a number");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec == std::errc() && p == end) return v;
  // Accept integral scientific notation such as 1e6.
  const double d = to_double(key, s);
  if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d))) bad_value(key, s, "expected a non-negative integer");
  return static_cast<std::uint64_t>(d);
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, s, "expected true or false");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  for (const auto& part : split(s, ',')) out.push_back(static_cast<std::size_t>(to_u64(key, part)));
  return out;
}

std::vector<double> to_double_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (const auto& part : split(s, ',')) out.push_back(to_double(key, part));
  return out;
}

/// "x,y; x,y"
std::vector<env::Vec2> to_positions(const std::string& key, const std::string& s) {
  std::vector<env::Vec2> out;
  if (trim(s).empty()) return out;
  for (const auto& item : split(s, ';')) {
    if (item.empty()) continue;
    const auto xy = to_double_list(key, item);
    if (xy.size() != 2) bad_value(key, s, "positions are 'x,y' pairs separated by ';'");
    out.push_back({xy[0], xy[1]});
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, p) : "nan";
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt(v[i]);
  }
  return out;
}

std::string fmt_positions(const std::vector<env::Vec2>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += fmt(v[i].x) + "," + fmt(v[i].y);
  }
  return out;
}

enum TaskMask : unsigned { kCoop = 1, kRover = 2, kPrey = 4, kAll = 7 };

unsigned mask_of(Task t) {
  switch (t) {
    case Task::CoopNav:
      return kCoop;
    case Task::Rover:
      return kRover;
    case Task::PredatorPrey:
      return kPrey;
  }
  return 0;
}

struct Key {
  std::string name;
  unsigned tasks;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define MERL_DOUBLE(key, mask, field) \
  Key{key, mask, [](ExperimentConfig& c, const std::string& v) { c.field = to_double(key, v); }, \
      [](const ExperimentConfig& c) { return fmt(static_cast<double>(c.field)); }}
#define MERL_SIZE(key, mask, field) \
  Key{key, mask, [](ExperimentConfig& c, const std::string& v) { c.field = static_cast<decltype(c.field)>(to_u64(key, v)); }, \
      [](const ExperimentConfig& c) { return fmt(static_cast<std::uint64_t>(c.field)); }}
#define MERL_BOOL(key, mask, field) \
  Key{key, mask, [](ExperimentConfig& c, const std::string& v) { c.field = to_bool(key, v); }, \
      [](const ExperimentConfig& c) { return fmt_bool(c.field); }}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      Key{"task", kAll, [](ExperimentConfig& c, const std::string& v) { c.env.task = env::parse_task(v); },
          [](const ExperimentConfig& c) { return env::to_string(c.env.task); }},
      Key{"algo", kAll, [](ExperimentConfig& c, const std::string& v) { c.algo = parse_algorithm(v); },
          [](const ExperimentConfig& c) { return to_string(c.algo); }},
      MERL_SIZE("agents", kAll, env.num_agents),
      MERL_SIZE("pois", kCoop | kRover, env.num_pois),
      MERL_SIZE("landmarks", kPrey, env.num_pois),
      MERL_SIZE("coupling", kRover, env.coupling),
      MERL_DOUBLE("world_size", kAll, env.world_size),
      MERL_SIZE("episode_length", kAll, env.episode_length),
      MERL_DOUBLE("dt", kAll, env.dt),
      MERL_DOUBLE("damping", kAll, env.damping),
      MERL_DOUBLE("accel_gain", kAll, env.agent.accel_gain),
      MERL_DOUBLE("max_speed", kAll, env.agent.max_speed),
      MERL_DOUBLE("agent_radius", kAll, env.agent_radius),
      MERL_DOUBLE("collision_penalty", kCoop, env.collision_penalty),
      MERL_DOUBLE("obs_radius", kRover, env.obs_radius),
      MERL_DOUBLE("sensor_range", kRover, env.sensor_range),
      MERL_DOUBLE("d_floor", kRover, env.d_floor),
      Key{"fuel", kRover, [](ExperimentConfig& c, const std::string& v) { c.env.fuel = to_double_list("fuel", v); },
          [](const ExperimentConfig& c) { return fmt_list(c.env.fuel); }},
      MERL_DOUBLE("prey_speed", kPrey, env.prey_speed_factor),
      MERL_DOUBLE("prey_accel_factor", kPrey, env.prey_accel_factor),
      MERL_DOUBLE("prey_radius", kPrey, env.prey_radius),
      Key{"prey_policy", kPrey, [](ExperimentConfig& c, const std::string& v) { c.prey_policy = parse_prey_policy(v); },
          [](const ExperimentConfig& c) { return to_string(c.prey_policy); }},
      Key{"agent_positions", kAll,
          [](ExperimentConfig& c, const std::string& v) { c.env.agent_positions = to_positions("agent_positions", v); },
          [](const ExperimentConfig& c) { return fmt_positions(c.env.agent_positions); }},
      Key{"poi_positions", kAll,
          [](ExperimentConfig& c, const std::string& v) { c.env.poi_positions = to_positions("poi_positions", v); },
          [](const ExperimentConfig& c) { return fmt_positions(c.env.poi_positions); }},
      MERL_DOUBLE("gamma", kAll, td3.gamma),
      MERL_DOUBLE("tau", kAll, td3.tau),
      MERL_DOUBLE("actor_lr", kAll, td3.actor_lr),
      MERL_DOUBLE("critic_lr", kAll, td3.critic_lr),
      MERL_DOUBLE("policy_noise", kAll, td3.policy_noise),
      MERL_DOUBLE("noise_clip", kAll, td3.noise_clip),
      MERL_SIZE("policy_freq", kAll, td3.policy_freq),
      MERL_SIZE("batch_size", kAll, td3.batch_size),
      MERL_BOOL("mask_terminal", kAll, td3.mask_terminal),
      MERL_SIZE("buffer_size", kAll, buffer_size),
      MERL_DOUBLE("exploration_noise", kAll, exploration_noise),
      Key{"actor_hidden", kAll,
          [](ExperimentConfig& c, const std::string& v) { c.actor_hidden = to_size_list("actor_hidden", v); },
          [](const ExperimentConfig& c) {
            std::vector<std::uint64_t> v(c.actor_hidden.begin(), c.actor_hidden.end());
            return fmt_list(v);
          }},
      Key{"critic_hidden", kAll,
          [](ExperimentConfig& c, const std::string& v) { c.critic_hidden = to_size_list("critic_hidden", v); },
          [](const ExperimentConfig& c) {
            std::vector<std::uint64_t> v(c.critic_hidden.begin(), c.critic_hidden.end());
            return fmt_list(v);
          }},
      MERL_SIZE("pop_size", kAll, pop_size),
      MERL_SIZE("elites", kAll, evolution.elites),
      MERL_SIZE("tournament_size", kAll, evolution.tournament_size),
      MERL_DOUBLE("mut_prob", kAll, evolution.mutation.mut_prob),
      MERL_DOUBLE("mut_frac", kAll, evolution.mutation.mut_frac),
      MERL_DOUBLE("mut_strength", kAll, evolution.mutation.mut_strength),
      MERL_DOUBLE("supermut_prob", kAll, evolution.mutation.supermut_prob),
      MERL_DOUBLE("resetmut_prob", kAll, evolution.mutation.resetmut_prob),
      MERL_DOUBLE("supermut_multiplier", kAll, evolution.mutation.supermut_multiplier),
      MERL_BOOL("relative_mutation", kAll, evolution.mutation.relative),
      MERL_SIZE("rollouts_per_fitness", kAll, rollouts_per_fitness),
      MERL_SIZE("rollout_size", kAll, rollout_size),
      MERL_SIZE("pg_updates_per_generation", kAll, pg_updates_per_generation),
      MERL_SIZE("migration_period", kAll, migration_period),
      MERL_SIZE("learn_start", kAll, learn_start),
      Key{"reward_mode", kAll, [](ExperimentConfig& c, const std::string& v) { c.reward_mode = parse_reward_mode(v); },
          [](const ExperimentConfig& c) { return to_string(c.reward_mode); }},
      MERL_DOUBLE("mixed_weight", kAll, mixed_weight),
      MERL_SIZE("updates_per_step", kAll, updates_per_step),
      MERL_SIZE("eval_every_episodes", kAll, eval_every_episodes),
      MERL_SIZE("frames", kAll, frame_budget),
      MERL_SIZE("seed", kAll, seed),
      MERL_SIZE("eval_instances", kAll, eval_instances),
      MERL_SIZE("eval_seed_base", kAll, eval_seed_base),
      MERL_SIZE("checkpoint_every", kAll, checkpoint_every),
      MERL_BOOL("dump_trajectory", kAll, dump_trajectory),
      Key{"out", kAll, [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
          [](const ExperimentConfig& c) { return c.out_dir; }},
      MERL_SIZE("workers", kAll, workers),
  };
  return keys;
}

#undef MERL_DOUBLE
#undef MERL_SIZE
#undef MERL_BOOL

const Key& find_key(const std::string& name) {
  for (const auto& k : registry()) {
    if (k.name == name) return k;
  }
  throw std::invalid_argument("unknown config key '" + name + "'");
}

std::string source_name(Source s) {
  switch (s) {
    case Source::Default:
      return "default";
    case Source::File:
      return "file";
    case Source::Flag:
      return "flag";
  }
  return "?";
}

}  // namespace

ExperimentConfig default_config(env::Task task, Algorithm algo) {
  ExperimentConfig c;
  c.algo = algo;
  c.env.task = task;
  const bool central = !is_population_algo(algo);
  switch (task) {
    case Task::CoopNav:
      c.env.num_agents = 3;
      c.env.num_pois = 3;
      c.env.episode_length = 50;
      c.env.agent = {0.5, env::kInf};
      c.env.agent_radius = 0.15;
      break;
    case Task::Rover:
      c.env.coupling = 1;
      c.env.num_agents = 2;
      c.env.num_pois = 4;
      c.env.episode_length = 70;
      c.env.agent = {0.5, 1.0};
      c.env.agent_radius = 0.05;
      break;
    case Task::PredatorPrey:
      c.env.num_agents = 3;
      c.env.num_pois = 2;
      c.env.episode_length = 50;
      c.env.agent = {0.3, 1.0};
      c.env.agent_radius = 0.075;
      c.env.prey_radius = 0.05;
      c.env.prey_speed_factor = 1.3;
      break;
  }
  // Hyperparameter tables: rover domain vs. coop-nav / predator-prey.
  if (task == Task::Rover) {
    c.rollout_size = 50;
    c.td3.tau = 1e-5;
    c.td3.actor_lr = 5e-5;
    c.td3.critic_lr = 1e-5;
    c.td3.gamma = central ? 0.97 : 0.5;
    c.buffer_size = 100'000;
    c.td3.batch_size = 512;
  } else {
    c.rollout_size = 10;
    c.td3.tau = 0.01;
    c.td3.actor_lr = 0.01;
    c.td3.critic_lr = 0.01;
    c.td3.gamma = 0.95;
    c.buffer_size = 1'000'000;
    c.td3.batch_size = 1024;
  }
  c.pop_size = 10;
  c.evolution.elites = 4;
  c.rollouts_per_fitness = 10;
  c.exploration_noise = 0.4;
  c.td3.policy_noise = 0.2;
  c.td3.noise_clip = 0.5;
  c.td3.policy_freq = 2;
  c.actor_hidden = {100, 100};
  c.critic_hidden = central ? std::vector<std::size_t>{300, 300} : std::vector<std::size_t>{100, 100};
  c.learn_start = c.td3.batch_size;
  if (algo == Algorithm::Maddpg) c.td3 = Td3Hyper::ddpg(c.td3);
  if (algo == Algorithm::Mixed) c.reward_mode = RewardMode::Mixed;
  return c;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument(key + ": " + why);
  };
  auto unit = [&](const std::string& key, double v) {
    if (!(v >= 0.0 && v <= 1.0)) fail(key, "must lie in [0, 1]");
  };
  try {
    env.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("env: ") + e.what());
  }
  unit("gamma", td3.gamma);
  unit("tau", td3.tau);
  if (!(td3.actor_lr >= 0.0)) fail("actor_lr", "must be >= 0");
  if (!(td3.critic_lr >= 0.0)) fail("critic_lr", "must be >= 0");
  if (!(td3.policy_noise >= 0.0)) fail("policy_noise", "must be >= 0");
  if (!(td3.noise_clip >= 0.0)) fail("noise_clip", "must be >= 0");
  if (td3.policy_freq == 0) fail("policy_freq", "must be >= 1");
  if (td3.batch_size == 0) fail("batch_size", "must be >= 1");
  if (buffer_size == 0) fail("buffer_size", "must be >= 1");
  if (!(exploration_noise >= 0.0)) fail("exploration_noise", "must be >= 0");
  if (actor_hidden.empty()) fail("actor_hidden", "needs at least one layer");
  if (critic_hidden.empty()) fail("critic_hidden", "needs at least one layer");
  for (auto h : actor_hidden) {
    if (h == 0) fail("actor_hidden", "layer widths must be >= 1");
  }
  for (auto h : critic_hidden) {
    if (h == 0) fail("critic_hidden", "layer widths must be >= 1");
  }
  if (pop_size == 0) fail("pop_size", "must be >= 1");
  if (evolution.elites == 0 || evolution.elites > pop_size) fail("elites", "must lie in [1, pop_size]");
  if (evolution.tournament_size == 0) fail("tournament_size", "must be >= 1");
  unit("mut_prob", evolution.mutation.mut_prob);
  unit("mut_frac", evolution.mutation.mut_frac);
  unit("supermut_prob", evolution.mutation.supermut_prob);
  unit("resetmut_prob", evolution.mutation.resetmut_prob);
  if (!(evolution.mutation.mut_strength >= 0.0)) fail("mut_strength", "must be >= 0");
  if (!(evolution.mutation.supermut_multiplier >= 0.0)) fail("supermut_multiplier", "must be >= 0");
  if (rollouts_per_fitness == 0) fail("rollouts_per_fitness", "must be >= 1");
  if (migration_period == 0) fail("migration_period", "must be >= 1");
  if (!(mixed_weight >= 0.0)) fail("mixed_weight", "must be >= 0");
  if (eval_every_episodes == 0) fail("eval_every_episodes", "must be >= 1");
  if (workers == 0) fail("workers", "must be >= 1");
  if (algo == Algorithm::Mixed && reward_mode != RewardMode::Mixed) fail("reward_mode", "algo mixed requires reward_mode mixed");
}

void Overrides::add(std::string key, std::string value, Source src) {
  find_key(key);
  entries.emplace_back(std::move(key), std::move(value));
  sources.push_back(src);
}

Overrides parse_config_text(const std::string& text, Source src) {
  Overrides out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    out.add(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), src);
  }
  return out;
}

Overrides parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), Source::File);
}

ResolvedConfig resolve_config(const Overrides& overrides) {
  Task task = Task::CoopNav;
  Algorithm algo = Algorithm::Merl;
  for (const auto& [k, v] : overrides.entries) {
    if (k == "task") task = env::parse_task(v);
    if (k == "algo") algo = parse_algorithm(v);
  }
  ResolvedConfig rc;
  rc.config = default_config(task, algo);
  for (const auto& k : registry()) {
    if (k.tasks & mask_of(task)) rc.provenance[k.name] = Source::Default;
  }
  std::set<std::string> explicit_keys;
  for (std::size_t i = 0; i < overrides.entries.size(); ++i) {
    const auto& [name, value] = overrides.entries[i];
    const auto& key = find_key(name);
    if (!(key.tasks & mask_of(task))) {
      throw std::invalid_argument(name + ": key does not apply to task " + env::to_string(task));
    }
    key.set(rc.config, value);
    rc.provenance[name] = overrides.sources[i];
    explicit_keys.insert(name);
  }
  auto& c = rc.config;
  // Rover teams default to two groups of `coupling` rovers.
  if (task == Task::Rover && !explicit_keys.contains("agents")) c.env.num_agents = 2 * c.env.coupling;
  if (!explicit_keys.contains("learn_start")) c.learn_start = c.td3.batch_size;
  if (algo == Algorithm::Maddpg && !explicit_keys.contains("policy_freq")) c.td3.policy_freq = 1;
  c.td3.twin = algo != Algorithm::Maddpg;
  c.validate();
  return rc;
}

std::string ResolvedConfig::lockfile() const {
  std::ostringstream os;
  os << "# resolved experiment configuration\n";
  for (const auto& k : registry()) {
    const auto it = provenance.find(k.name);
    if (it == provenance.end()) continue;
    os << k.name << " = " << k.get(config) << "  # " << source_name(it->second) << '\n';
  }
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(k.name);
  return out;
}

std::string config_value(const ExperimentConfig& cfg, const std::string& key) { return find_key(key).get(cfg); }

bool key_applies(const std::string& key, env::Task task) { return (find_key(key).tasks & mask_of(task)) != 0; }

std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : registry()) {
    if (k.tasks & mask_of(cfg.env.task)) out += k.name + " = " + k.get(cfg) + '\n';
  }
  return out;
}

}  // namespace merl
