#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "merl/nn.hpp"
#include "merl/rng.hpp"

namespace merl {

using JointObservation = std::vector<std::vector<double>>;
using JointAction = std::vector<std::vector<double>>;

/// Additive Gaussian exploration noise applied to actions.
struct ExplorationNoise {
  RngStream* rng = nullptr;
  double sigma = 0.0;
};

/// Multi-headed team network: one shared trunk layer feeding one head per
/// agent. The trunk is the first hidden layer; the remaining hidden layers
/// and the tanh output layer belong to each head.
class TeamPolicy {
 public:
  TeamPolicy() = default;

  /// Randomly initialized team. hidden_dims must be non-empty.
  TeamPolicy(std::size_t num_agents, std::size_t obs_dim, std::size_t action_dim,
             const std::vector<std::size_t>& hidden_dims, RngStream& rng);

  TeamPolicy(Network trunk, std::vector<Network> heads);

  static TeamPolicy zeros(std::size_t num_agents, std::size_t obs_dim, std::size_t action_dim,
                          const std::vector<std::size_t>& hidden_dims);

  std::size_t num_agents() const { return heads_.size(); }
  std::size_t obs_dim() const { return trunk_.spec.input_dim; }
  std::size_t action_dim() const { return heads_.empty() ? 0 : heads_.front().spec.output_dim; }

  const Network& trunk() const { return trunk_; }
  Network& trunk() { return trunk_; }
  const Network& head(std::size_t k) const;
  Network& head(std::size_t k);

  /// Head k's action for obs: tanh output, plus optional noise, clamped to [-1, 1].
  std::vector<double> act(std::size_t k, std::span<const double> obs,
                          std::optional<ExplorationNoise> noise = std::nullopt) const;

  /// Agents act independently; noise draws are taken in agent order.
  JointAction act_team(const JointObservation& obs,
                       std::optional<ExplorationNoise> noise = std::nullopt) const;

  std::size_t param_count() const;
  /// Trunk parameters, then heads in agent order.
  ParamVector flatten() const;
  void unflatten(std::span<const double> flat);
  bool same_topology(const TeamPolicy& other) const;

  void save(std::ostream& os) const;
  static TeamPolicy load(std::istream& is);

  friend bool operator==(const TeamPolicy&, const TeamPolicy&) = default;

 private:
  void check_agent(std::size_t k) const;
  Network trunk_;
  std::vector<Network> heads_;
};

/// Per-component gradient of a TeamPolicy; index layout mirrors flatten().
struct TeamGradient {
  ParamVector trunk;
  std::vector<ParamVector> heads;

  explicit TeamGradient(const TeamPolicy& team);
  void zero();
};

/// Saved activations for a batched pass through trunk and one head.
struct ActorTape {
  ForwardTape trunk;
  ForwardTape head;
  std::size_t agent = 0;
};

/// Batched deterministic (pre-noise) actions of head k; columns are samples.
Eigen::MatrixXd actor_forward_batch(const TeamPolicy& team, std::size_t k, const Eigen::MatrixXd& obs,
                                    ActorTape* tape = nullptr);

/// Adds d(sum upstream . actions)/d(params) for head k and the trunk into grad.
void actor_backward_batch(const TeamPolicy& team, const ActorTape& tape, const Eigen::MatrixXd& upstream,
                          TeamGradient& grad);

}  // namespace merl
