#pragma once

// Deterministic 2-D particle world and the three benchmark tasks.
//
// Bodies follow a damped double integrator:
//   v <- damping * v + accel_gain * a, |v| clamped to max_speed
//   p <- p + v * dt
// Initial positions are uniform in [-world_size/2, world_size/2]^2; motion
// itself is unbounded.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "merl/policy.hpp"
#include "merl/rng.hpp"

namespace merl::env {

enum class Task { CoopNav, Rover, PredatorPrey };

std::string to_string(Task task);
Task parse_task(const std::string& name);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(Vec2 a, Vec2 b);

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct BodyDynamics {
  double accel_gain = 0.5;
  double max_speed = kInf;
};

struct EnvConfig {
  Task task = Task::CoopNav;
  std::size_t num_agents = 3;
  /// POIs (coop-nav, rover) or landmarks (predator-prey).
  std::size_t num_pois = 3;
  std::size_t coupling = 1;
  double world_size = 2.0;
  std::size_t episode_length = 50;
  double dt = 0.1;
  double damping = 0.75;
  BodyDynamics agent{0.5, kInf};
  double agent_radius = 0.15;
  double poi_radius = 0.05;
  double collision_penalty = 1.0;

  // Rover domain.
  double obs_radius = -1.0;  // < 0: 10% of the world diagonal
  double sensor_range = kInf;
  double d_floor = 0.05;
  std::vector<double> fuel;  // per-rover cumulative distance budget; empty = unlimited

  // Predator-prey.
  double prey_speed_factor = 1.3;
  double prey_accel_factor = 4.0 / 3.0;
  double prey_radius = 0.05;

  // Fixed layouts (rover_motivate); empty = random placement.
  std::vector<Vec2> agent_positions;
  std::vector<Vec2> poi_positions;
  std::optional<Vec2> prey_position;

  double effective_obs_radius() const;
  BodyDynamics prey_dynamics() const;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Per-agent observation length for the controlled team.
  std::size_t obs_dim() const;
  /// Prey observation length (predator-prey only).
  std::size_t prey_obs_dim() const;
  static constexpr std::size_t action_dim() { return 2; }
};

struct WorldState {
  std::vector<Vec2> pos;
  std::vector<Vec2> vel;
  std::vector<double> distance_travelled;
  std::vector<Vec2> pois;
  std::vector<bool> observed;
  bool has_prey = false;
  Vec2 prey_pos, prey_vel;
  std::size_t t = 0;
  std::size_t episode_length = 0;
  double local_sum = 0.0;  // coop-nav running sum of the shared reward
  std::size_t touches = 0;
  double global = 0.0;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct StepResult {
  JointObservation next_obs;
  std::vector<double> local;
  double global = 0.0;
  bool done = false;
  // Predator-prey only.
  double prey_reward = 0.0;
  std::vector<double> prey_next_obs;
  std::size_t touches_this_step = 0;
};

/// Fresh world: bodies and POIs placed uniformly (or at fixed positions),
/// velocities zero, flags cleared.
WorldState reset(const EnvConfig& config, RngStream& rng);

/// One double-integrator update of a body. Returns the distance moved.
double integrate_body(Vec2& pos, Vec2& vel, Vec2 accel, const BodyDynamics& dyn, double damping, double dt,
                      double fuel_left = kInf);

struct CoopNavRewards {
  double local = 0.0;  // shared by every agent
  std::size_t collisions = 0;
};

/// local = -sum_poi min_agent dist - penalty * (#colliding agent pairs).
CoopNavRewards coop_nav_rewards(const WorldState& state, const EnvConfig& config);

/// 36 POI bins then 36 rover bins (10 degrees each, bin 0 starts due east,
/// counter-clockwise). Each bin holds 1 / max(d, d_floor) of the closest
/// reflector in that bracket within sensor_range, else 0.
std::vector<double> rover_observe(const WorldState& state, std::size_t k, const EnvConfig& config);

inline constexpr std::size_t kRoverBins = 36;

struct RoverRewards {
  std::vector<double> local;
  double global = 0.0;
};

/// Latches POIs with >= coupling rovers inside obs_radius, then returns
/// global = observed fraction and local_k = -dist(rover k, closest POI).
RoverRewards rover_rewards(WorldState& state, const EnvConfig& config);

struct PredatorPreyRewards {
  std::vector<double> local;       // -mean distance to prey
  std::vector<bool> touching;      // per predator
  std::size_t touches = 0;         // this step
  double prey_reward = 0.0;        // -1 per touch
  double global = 0.0;             // cumulative touches this episode
};

/// Counts touches (center distance < r_pred + r_prey) and accumulates them.
PredatorPreyRewards predator_prey_rewards(WorldState& state, const EnvConfig& config);

/// Coop-nav: [own vel, own pos, POI rel pos..., other agents rel pos...].
/// Predator-prey (predator): [own vel, own pos, landmark rel pos..., other
/// predators rel pos and rel vel..., prey rel pos, prey rel vel].
/// Rover: rover_observe.
std::vector<double> observe(const WorldState& state, std::size_t k, const EnvConfig& config);

/// [prey vel, prey pos, landmark rel pos..., predator rel pos and rel vel...].
std::vector<double> observe_prey(const WorldState& state, const EnvConfig& config);

/// Owns a WorldState and advances it. Single-threaded; one instance per worker.
class Environment {
 public:
  explicit Environment(EnvConfig config);

  const EnvConfig& config() const { return config_; }
  const WorldState& state() const { return state_; }
  WorldState& mutable_state() { return state_; }

  std::size_t num_agents() const { return config_.num_agents; }
  std::size_t obs_dim() const { return config_.obs_dim(); }
  std::size_t action_dim() const { return EnvConfig::action_dim(); }
  bool has_adversary() const { return config_.task == Task::PredatorPrey; }

  JointObservation reset(RngStream& rng);
  JointObservation observe_all() const;
  std::vector<double> adversary_observation() const;

  /// Advances one joint step. prey_action is required for predator-prey.
  StepResult step(const JointAction& actions, const std::vector<double>* prey_action = nullptr);

 private:
  EnvConfig config_;
  WorldState state_;
};

}  // namespace merl::env
