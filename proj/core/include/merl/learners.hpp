#pragma once

// Gradient-based learners: the shared-critic TD3 learner that trains the
// policy-gradient team, its DDPG degeneration (used for the prey), and the
// centralized-critic MATD3/MADDPG baseline.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "merl/nn.hpp"
#include "merl/policy.hpp"
#include "merl/replay.hpp"
#include "merl/rng.hpp"

namespace merl {

struct Td3Hyper {
  double gamma = 0.95;
  double tau = 0.01;
  double actor_lr = 0.01;
  double critic_lr = 0.01;
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  std::size_t policy_freq = 2;
  std::size_t batch_size = 1024;
  bool twin = true;
  /// Zero the bootstrap term on transitions flagged done. Off by default:
  /// every task ends on a time limit, which is not a true terminal state.
  bool mask_terminal = false;

  /// DDPG: single critic, no target smoothing, actor update every step.
  static Td3Hyper ddpg(Td3Hyper base);
};

enum class CriticChoice { Min, First, Second };

/// Twin Q networks, each mapping (state ⊕ action) to a scalar, with target
/// copies. A non-twin critic carries only the first network.
class SharedCritic {
 public:
  SharedCritic() = default;
  SharedCritic(std::size_t state_dim, std::size_t action_dim, const std::vector<std::size_t>& hidden, bool twin,
               double lr, RngStream& rng);
  /// Explicit networks; targets start as copies.
  SharedCritic(std::size_t state_dim, std::size_t action_dim, Network q1, std::optional<Network> q2, double lr);

  bool twin() const { return twin_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t num_critics() const { return twin_ ? 2 : 1; }

  const Network& q(std::size_t i) const { return q_.at(i); }
  Network& q(std::size_t i) { return q_.at(i); }
  const Network& target(std::size_t i) const { return target_.at(i); }
  Network& target(std::size_t i) { return target_.at(i); }
  AdamState& adam(std::size_t i) { return adam_.at(i); }

  Eigen::RowVectorXd value(std::size_t i, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;
  Eigen::RowVectorXd target_value(CriticChoice choice, const Eigen::MatrixXd& states,
                                  const Eigen::MatrixXd& actions) const;

  /// MSE against targets; one Adam step per critic. Returns the summed
  /// pre-step loss over critics.
  double update(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions, std::span<const double> targets);

  /// Gradient of sum_i weight * Q1(s_i, a_i) with respect to the actions.
  Eigen::MatrixXd action_gradient(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                  double weight) const;

  void soft_update_targets(double tau);

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  Eigen::MatrixXd stack(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;

  std::size_t state_dim_ = 0, action_dim_ = 0;
  bool twin_ = true;
  std::array<Network, 2> q_;
  std::array<Network, 2> target_;
  std::array<AdamState, 2> adam_;
};

/// Clipped Gaussian smoothing noise, action_dim x T.
Eigen::MatrixXd smoothing_noise(RngStream& rng, std::size_t action_dim, std::size_t batch, double sigma, double clip);

/// The policy-gradient team plus its shared critic. Each agent k trains on
/// minibatches from its own buffer; the critic conditions on agent-local
/// (s_k, a_k).
class Td3Learner {
 public:
  Td3Learner() = default;
  Td3Learner(std::size_t num_agents, std::size_t obs_dim, std::size_t action_dim,
             const std::vector<std::size_t>& actor_hidden, const std::vector<std::size_t>& critic_hidden,
             const Td3Hyper& hyper, RngStream& init_rng);
  Td3Learner(TeamPolicy actor, SharedCritic critic, const Td3Hyper& hyper);

  const Td3Hyper& hyper() const { return hyper_; }
  Td3Hyper& hyper() { return hyper_; }
  const TeamPolicy& actor() const { return actor_; }
  TeamPolicy& actor() { return actor_; }
  const TeamPolicy& actor_target() const { return actor_target_; }
  TeamPolicy& actor_target() { return actor_target_; }
  const SharedCritic& critic() const { return critic_; }
  SharedCritic& critic() { return critic_; }

  /// y_i = l_i + gamma * (1 - masked done_i) * Q'(s'_i, clamp(pi'^k(s'_i) + noise_i)).
  std::vector<double> td3_target(std::size_t k, const Batch& batch, RngStream& rng) const;
  std::vector<double> td3_target(std::size_t k, const Batch& batch, const Eigen::MatrixXd& noise,
                                 CriticChoice choice = CriticChoice::Min) const;

  double critic_update(const Batch& batch, std::span<const double> targets);

  /// (1/T) sum_i Q1(s_i, pi^k(s_i)).
  double actor_objective(std::size_t k, const Batch& batch) const;
  /// Gradient of actor_objective with respect to the actor's parameters.
  TeamGradient actor_objective_gradient(std::size_t k, const Batch& batch) const;
  /// One Adam ascent step on actor_objective, then soft target updates.
  void actor_update(std::size_t k, const Batch& batch);

  /// Target, critic update, and every policy_freq-th call for agent k an
  /// actor update. Returns the critic loss.
  double train_step(std::size_t k, const Batch& batch, RngStream& rng);

  std::uint64_t critic_updates() const { return critic_updates_total_; }
  std::uint64_t actor_updates() const { return actor_updates_total_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  void init_optimizers();

  TeamPolicy actor_, actor_target_;
  SharedCritic critic_;
  Td3Hyper hyper_;
  AdamState trunk_adam_;
  std::vector<AdamState> head_adam_;
  std::vector<std::uint64_t> critic_updates_per_agent_;
  std::uint64_t critic_updates_total_ = 0, actor_updates_total_ = 0;
};

/// MATD3 (or MADDPG with Td3Hyper::ddpg): decentralized actor heads, one
/// centralized critic per agent over the joint observation and action.
class CentralLearner {
 public:
  CentralLearner() = default;
  CentralLearner(std::size_t num_agents, std::size_t obs_dim, std::size_t action_dim,
                 const std::vector<std::size_t>& actor_hidden, const std::vector<std::size_t>& critic_hidden,
                 const Td3Hyper& hyper, RngStream& init_rng);

  std::size_t num_agents() const { return actor_.num_agents(); }
  std::size_t joint_obs_dim() const { return actor_.num_agents() * actor_.obs_dim(); }
  std::size_t joint_action_dim() const { return actor_.num_agents() * actor_.action_dim(); }
  std::size_t critic_input_dim() const { return joint_obs_dim() + joint_action_dim(); }

  const Td3Hyper& hyper() const { return hyper_; }
  const TeamPolicy& actor() const { return actor_; }
  TeamPolicy& actor() { return actor_; }
  const SharedCritic& critic(std::size_t k) const { return critics_.at(k); }
  SharedCritic& critic(std::size_t k) { return critics_.at(k); }

  /// Throws if the joint batch is not timestep-aligned with this learner.
  void check_joint_batch(const Batch& batch) const;

  std::vector<double> target(std::size_t k, const Batch& batch, RngStream& rng) const;
  double critic_update(std::size_t k, const Batch& batch, std::span<const double> targets);
  void actor_update(std::size_t k, const Batch& batch);

  /// Critic (and delayed actor) update for every agent. Returns mean critic loss.
  double train_step(const Batch& batch, RngStream& rng);

  std::uint64_t critic_updates() const { return critic_updates_total_; }
  std::uint64_t actor_updates() const { return actor_updates_total_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  Eigen::MatrixXd agent_rows(const Eigen::MatrixXd& joint, std::size_t k, std::size_t dim) const;

  TeamPolicy actor_, actor_target_;
  std::vector<SharedCritic> critics_;
  Td3Hyper hyper_;
  AdamState trunk_adam_;
  std::vector<AdamState> head_adam_;
  std::vector<std::uint64_t> critic_updates_per_agent_;
  std::uint64_t critic_updates_total_ = 0, actor_updates_total_ = 0;
};

/// Running min-max scaler to [0, 1]; a constant history scales to 0.
class MinMaxScaler {
 public:
  void observe(double x);
  double scale(double x) const;
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  bool seen() const { return seen_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  double lo_ = 0.0, hi_ = 0.0;
  bool seen_ = false;
};

/// Static scalarization: scaled(local) + weight * scaled(team), each
/// component min-max scaled over every value observed so far.
class MixedReward {
 public:
  explicit MixedReward(double weight = 10.0) : weight_(weight) {}

  double weight() const { return weight_; }

  /// Observes this step's components, then returns one mixed reward per agent.
  std::vector<double> mix_step(std::span<const double> locals, double team);

  const MinMaxScaler& local_scaler() const { return local_; }
  const MinMaxScaler& team_scaler() const { return team_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  double weight_;
  MinMaxScaler local_, team_;
};

}  // namespace merl
