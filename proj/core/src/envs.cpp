#include "merl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace merl::env {

std::string to_string(Task task) {
  switch (task) {
    case Task::CoopNav:
      return "coop_nav";
    case Task::Rover:
      return "rover";
    case Task::PredatorPrey:
      return "predator_prey";
  }
  return "unknown";
}

Task parse_task(const std::string& name) {
  if (name == "coop_nav") return Task::CoopNav;
  if (name == "rover") return Task::Rover;
  if (name == "predator_prey") return Task::PredatorPrey;
  throw std::invalid_argument("unknown task '" + name + "' (expected coop_nav, rover or predator_prey)");
}

double Vec2::norm() const { return std::hypot(x, y); }

double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

double EnvConfig::effective_obs_radius() const {
  return obs_radius >= 0.0 ? obs_radius : 0.1 * world_size * std::numbers::sqrt2;
}

BodyDynamics EnvConfig::prey_dynamics() const {
  return {agent.accel_gain * prey_accel_factor, agent.max_speed * prey_speed_factor};
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("env config: " + what); };
  if (num_agents == 0) fail("agents must be >= 1");
  if (task != Task::PredatorPrey && num_pois == 0) fail("pois must be >= 1");
  if (!(world_size > 0.0)) fail("world_size must be > 0");
  if (episode_length == 0) fail("episode_length must be >= 1");
  if (!(dt > 0.0)) fail("dt must be > 0");
  if (!(damping >= 0.0 && damping <= 1.0)) fail("damping must lie in [0, 1]");
  if (!(agent.accel_gain >= 0.0)) fail("accel_gain must be >= 0");
  if (!(agent.max_speed > 0.0)) fail("max_speed must be > 0");
  if (task == Task::Rover) {
    if (coupling < 1 || coupling > 7) fail("coupling must lie in [1, 7]");
    if (!(d_floor > 0.0)) fail("d_floor must be > 0");
    if (!(sensor_range > 0.0)) fail("sensor_range must be > 0");
    if (!fuel.empty() && fuel.size() != num_agents) fail("fuel needs one entry per rover");
    for (double f : fuel) {
      if (!(f >= 0.0)) fail("fuel entries must be >= 0");
    }
  }
  if (task == Task::PredatorPrey && !(prey_speed_factor > 0.0)) fail("prey_speed must be > 0");
  if (!agent_positions.empty() && agent_positions.size() != num_agents) fail("agent_positions needs one entry per agent");
  if (!poi_positions.empty() && poi_positions.size() != num_pois) fail("poi_positions needs one entry per POI");
}

std::size_t EnvConfig::obs_dim() const {
  switch (task) {
    case Task::CoopNav:
      return 4 + 2 * num_pois + 2 * (num_agents - 1);
    case Task::Rover:
      return 2 * kRoverBins;
    case Task::PredatorPrey:
      return 4 + 2 * num_pois + 4 * (num_agents - 1) + 4;
  }
  return 0;
}

std::size_t EnvConfig::prey_obs_dim() const { return 4 + 2 * num_pois + 4 * num_agents; }

WorldState reset(const EnvConfig& config, RngStream& rng) {
  config.validate();
  const double half = 0.5 * config.world_size;
  auto place = [&] { return Vec2{rng.uniform(-half, half), rng.uniform(-half, half)}; };
  WorldState s;
  s.episode_length = config.episode_length;
  for (std::size_t k = 0; k < config.num_agents; ++k) s.pos.push_back(place());
  for (std::size_t p = 0; p < config.num_pois; ++p) s.pois.push_back(place());
  if (config.task == Task::PredatorPrey) {
    s.has_prey = true;
    s.prey_pos = place();
  }
  if (!config.agent_positions.empty()) s.pos = config.agent_positions;
  if (!config.poi_positions.empty()) s.pois = config.poi_positions;
  if (config.prey_position) s.prey_pos = *config.prey_position;
  s.vel.assign(config.num_agents, Vec2{});
  s.distance_travelled.assign(config.num_agents, 0.0);
  s.observed.assign(config.num_pois, false);
  return s;
}

double integrate_body(Vec2& pos, Vec2& vel, Vec2 accel, const BodyDynamics& dyn, double damping, double dt,
                      double fuel_left) {
  if (fuel_left <= 0.0) {
    vel = Vec2{};
    return 0.0;
  }
  vel = vel * damping + accel * dyn.accel_gain;
  const double speed = vel.norm();
  if (speed > dyn.max_speed) vel = vel * (dyn.max_speed / speed);
  double moved = vel.norm() * dt;
  if (moved > fuel_left) {
    vel = vel * (fuel_left / moved);
    moved = fuel_left;
  }
  pos = pos + vel * dt;
  return moved;
}

CoopNavRewards coop_nav_rewards(const WorldState& state, const EnvConfig& config) {
  CoopNavRewards r;
  for (const auto& poi : state.pois) {
    double best = kInf;
    for (const auto& p : state.pos) best = std::min(best, distance(poi, p));
    r.local -= best;
  }
  for (std::size_t i = 0; i < state.pos.size(); ++i) {
    for (std::size_t j = i + 1; j < state.pos.size(); ++j) {
      if (distance(state.pos[i], state.pos[j]) < 2.0 * config.agent_radius) ++r.collisions;
    }
  }
  r.local -= config.collision_penalty * static_cast<double>(r.collisions);
  return r;
}

namespace {

std::size_t angle_bin(Vec2 d) {
  double deg = std::atan2(d.y, d.x) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  const auto bin = static_cast<std::size_t>(deg / 10.0);
  return std::min(bin, kRoverBins - 1);
}

void reflect(std::vector<double>& obs, std::size_t channel, Vec2 self, Vec2 other, const EnvConfig& config,
             std::vector<double>& nearest) {
  const Vec2 d = other - self;
  const double dist = d.norm();
  if (dist > config.sensor_range) return;
  const std::size_t slot = channel * kRoverBins + angle_bin(d);
  if (dist < nearest[slot]) {
    nearest[slot] = dist;
    obs[slot] = 1.0 / std::max(dist, config.d_floor);
  }
}

void append_rel(std::vector<double>& out, Vec2 v) {
  out.push_back(v.x);
  out.push_back(v.y);
}

}  // namespace

std::vector<double> rover_observe(const WorldState& state, std::size_t k, const EnvConfig& config) {
  if (k >= state.pos.size()) throw std::out_of_range("rover_observe: agent index");
  std::vector<double> obs(2 * kRoverBins, 0.0);
  std::vector<double> nearest(2 * kRoverBins, kInf);
  const Vec2 self = state.pos[k];
  for (const auto& poi : state.pois) reflect(obs, 0, self, poi, config, nearest);
  for (std::size_t j = 0; j < state.pos.size(); ++j) {
    if (j != k) reflect(obs, 1, self, state.pos[j], config, nearest);
  }
  return obs;
}

RoverRewards rover_rewards(WorldState& state, const EnvConfig& config) {
  const double radius = config.effective_obs_radius();
  for (std::size_t p = 0; p < state.pois.size(); ++p) {
    if (state.observed[p]) continue;
    std::size_t near = 0;
    for (const auto& pos : state.pos) near += distance(pos, state.pois[p]) <= radius ? 1 : 0;
    if (near >= config.coupling) state.observed[p] = true;
  }
  RoverRewards r;
  const auto seen = std::count(state.observed.begin(), state.observed.end(), true);
  r.global = state.pois.empty() ? 0.0 : static_cast<double>(seen) / static_cast<double>(state.pois.size());
  for (const auto& pos : state.pos) {
    double best = kInf;
    for (const auto& poi : state.pois) best = std::min(best, distance(pos, poi));
    r.local.push_back(-best);
  }
  return r;
}

PredatorPreyRewards predator_prey_rewards(WorldState& state, const EnvConfig& config) {
  PredatorPreyRewards r;
  for (const auto& pos : state.pos) {
    const double d = distance(pos, state.prey_pos);
    r.local.push_back(-d);
    const bool touch = d < config.agent_radius + config.prey_radius;
    r.touching.push_back(touch);
    r.touches += touch ? 1 : 0;
  }
  state.touches += r.touches;
  r.prey_reward = -static_cast<double>(r.touches);
  r.global = static_cast<double>(state.touches);
  return r;
}

std::vector<double> observe(const WorldState& state, std::size_t k, const EnvConfig& config) {
  if (k >= state.pos.size()) throw std::out_of_range("observe: agent index");
  if (config.task == Task::Rover) return rover_observe(state, k, config);
  std::vector<double> out;
  out.reserve(config.obs_dim());
  const Vec2 self = state.pos[k];
  const Vec2 self_vel = state.vel[k];
  append_rel(out, self_vel);
  append_rel(out, self);
  for (const auto& poi : state.pois) append_rel(out, poi - self);
  for (std::size_t j = 0; j < state.pos.size(); ++j) {
    if (j == k) continue;
    append_rel(out, state.pos[j] - self);
    if (config.task == Task::PredatorPrey) append_rel(out, state.vel[j] - self_vel);
  }
  if (config.task == Task::PredatorPrey) {
    append_rel(out, state.prey_pos - self);
    append_rel(out, state.prey_vel - self_vel);
  }
  return out;
}

std::vector<double> observe_prey(const WorldState& state, const EnvConfig& config) {
  if (!state.has_prey) throw std::logic_error("observe_prey: world has no prey");
  std::vector<double> out;
  out.reserve(config.prey_obs_dim());
  append_rel(out, state.prey_vel);
  append_rel(out, state.prey_pos);
  for (const auto& l : state.pois) append_rel(out, l - state.prey_pos);
  for (std::size_t j = 0; j < state.pos.size(); ++j) {
    append_rel(out, state.pos[j] - state.prey_pos);
    append_rel(out, state.vel[j] - state.prey_vel);
  }
  return out;
}

Environment::Environment(EnvConfig config) : config_(std::move(config)) { config_.validate(); }

JointObservation Environment::reset(RngStream& rng) {
  state_ = env::reset(config_, rng);
  return observe_all();
}

JointObservation Environment::observe_all() const {
  JointObservation obs;
  obs.reserve(config_.num_agents);
  for (std::size_t k = 0; k < config_.num_agents; ++k) obs.push_back(observe(state_, k, config_));
  return obs;
}

std::vector<double> Environment::adversary_observation() const { return observe_prey(state_, config_); }

StepResult Environment::step(const JointAction& actions, const std::vector<double>* prey_action) {
  if (state_.pos.empty()) throw std::logic_error("Environment::step before reset");
  if (actions.size() != config_.num_agents) throw std::invalid_argument("Environment::step: wrong number of actions");
  auto to_accel = [](const std::vector<double>& a) {
    if (a.size() != 2) throw std::invalid_argument("Environment::step: actions are 2-D");
    for (double v : a) {
      if (std::isnan(v)) throw std::domain_error("Environment::step: NaN action");
    }
    return Vec2{std::clamp(a[0], -1.0, 1.0), std::clamp(a[1], -1.0, 1.0)};
  };
  for (std::size_t k = 0; k < config_.num_agents; ++k) {
    double fuel_left = kInf;
    if (!config_.fuel.empty()) fuel_left = config_.fuel[k] - state_.distance_travelled[k];
    state_.distance_travelled[k] +=
        integrate_body(state_.pos[k], state_.vel[k], to_accel(actions[k]), config_.agent, config_.damping,
                       config_.dt, fuel_left);
  }
  if (has_adversary()) {
    if (prey_action == nullptr) throw std::invalid_argument("Environment::step: predator-prey needs a prey action");
    integrate_body(state_.prey_pos, state_.prey_vel, to_accel(*prey_action), config_.prey_dynamics(),
                   config_.damping, config_.dt);
  }
  ++state_.t;

  StepResult r;
  switch (config_.task) {
    case Task::CoopNav: {
      const auto cn = coop_nav_rewards(state_, config_);
      state_.local_sum += cn.local;
      r.local.assign(config_.num_agents, cn.local);
      state_.global = state_.local_sum / static_cast<double>(state_.t);
      break;
    }
    case Task::Rover: {
      auto rr = rover_rewards(state_, config_);
      r.local = std::move(rr.local);
      state_.global = rr.global;
      break;
    }
    case Task::PredatorPrey: {
      auto pp = predator_prey_rewards(state_, config_);
      r.local = std::move(pp.local);
      r.prey_reward = pp.prey_reward;
      r.touches_this_step = pp.touches;
      state_.global = pp.global;
      break;
    }
  }
  r.global = state_.global;
  r.done = state_.t >= state_.episode_length;
  r.next_obs = observe_all();
  if (has_adversary()) r.prey_next_obs = adversary_observation();
  return r;
}

}  // namespace merl::env
