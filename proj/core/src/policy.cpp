#include "merl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "merl/binary_io.hpp"

namespace merl {

namespace {

MlpSpec trunk_spec(std::size_t obs_dim, const std::vector<std::size_t>& hidden) {
  if (hidden.empty()) throw std::invalid_argument("TeamPolicy: at least one hidden layer is required");
  return MlpSpec{obs_dim, {}, hidden.front(), Activation::Tanh};
}

MlpSpec head_spec(std::size_t action_dim, const std::vector<std::size_t>& hidden) {
  return MlpSpec{hidden.front(), {hidden.begin() + 1, hidden.end()}, action_dim, Activation::Tanh};
}

}  // namespace

TeamPolicy::TeamPolicy(std::size_t num_agents, std::size_t obs_dim, std::size_t action_dim,
                       const std::vector<std::size_t>& hidden_dims, RngStream& rng) {
  if (num_agents == 0) throw std::invalid_argument("TeamPolicy: num_agents must be >= 1");
  trunk_ = Network(trunk_spec(obs_dim, hidden_dims), rng);
  heads_.reserve(num_agents);
  for (std::size_t k = 0; k < num_agents; ++k) heads_.emplace_back(head_spec(action_dim, hidden_dims), rng);
}

TeamPolicy::TeamPolicy(Network trunk, std::vector<Network> heads)
    : trunk_(std::move(trunk)), heads_(std::move(heads)) {
  if (heads_.empty()) throw std::invalid_argument("TeamPolicy: at least one head is required");
  for (const auto& h : heads_) {
    if (h.spec.input_dim != trunk_.spec.output_dim) {
      throw std::invalid_argument("TeamPolicy: head input dim must equal trunk output dim");
    }
    if (h.spec.output_dim != heads_.front().spec.output_dim) {
      throw std::invalid_argument("TeamPolicy: heads must share an action dim");
    }
  }
}

TeamPolicy TeamPolicy::zeros(std::size_t num_agents, std::size_t obs_dim, std::size_t action_dim,
                             const std::vector<std::size_t>& hidden_dims) {
  std::vector<Network> heads;
  for (std::size_t k = 0; k < num_agents; ++k) heads.push_back(Network::zeros(head_spec(action_dim, hidden_dims)));
  return TeamPolicy(Network::zeros(trunk_spec(obs_dim, hidden_dims)), std::move(heads));
}

void TeamPolicy::check_agent(std::size_t k) const {
  if (k >= heads_.size()) {
    throw std::out_of_range("TeamPolicy: agent index " + std::to_string(k) + " out of range (N=" +
                            std::to_string(heads_.size()) + ")");
  }
}

const Network& TeamPolicy::head(std::size_t k) const {
  check_agent(k);
  return heads_[k];
}

Network& TeamPolicy::head(std::size_t k) {
  check_agent(k);
  return heads_[k];
}

std::vector<double> TeamPolicy::act(std::size_t k, std::span<const double> obs,
                                    std::optional<ExplorationNoise> noise) const {
  check_agent(k);
  auto features = trunk_(obs);
  auto action = heads_[k](features);
  if (noise && noise->sigma > 0.0) {
    if (noise->rng == nullptr) throw std::invalid_argument("TeamPolicy::act: noise without rng");
    for (auto& a : action) a += noise->rng->normal(noise->sigma);
  }
  for (auto& a : action) a = std::clamp(a, -1.0, 1.0);
  return action;
}

JointAction TeamPolicy::act_team(const JointObservation& obs, std::optional<ExplorationNoise> noise) const {
  if (obs.size() != heads_.size()) {
    throw std::invalid_argument("act_team: got " + std::to_string(obs.size()) + " observations for " +
                                std::to_string(heads_.size()) + " agents");
  }
  JointAction out;
  out.reserve(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) out.push_back(act(k, obs[k], noise));
  return out;
}

std::size_t TeamPolicy::param_count() const {
  std::size_t n = trunk_.params.size();
  for (const auto& h : heads_) n += h.params.size();
  return n;
}

ParamVector TeamPolicy::flatten() const {
  ParamVector flat;
  flat.reserve(param_count());
  flat.insert(flat.end(), trunk_.params.begin(), trunk_.params.end());
  for (const auto& h : heads_) flat.insert(flat.end(), h.params.begin(), h.params.end());
  return flat;
}

void TeamPolicy::unflatten(std::span<const double> flat) {
  if (flat.size() != param_count()) {
    throw std::invalid_argument("unflatten: length " + std::to_string(flat.size()) + " != " +
                                std::to_string(param_count()));
  }
  auto it = flat.begin();
  std::copy(it, it + static_cast<std::ptrdiff_t>(trunk_.params.size()), trunk_.params.begin());
  it += static_cast<std::ptrdiff_t>(trunk_.params.size());
  for (auto& h : heads_) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(h.params.size()), h.params.begin());
    it += static_cast<std::ptrdiff_t>(h.params.size());
  }
}

bool TeamPolicy::same_topology(const TeamPolicy& other) const {
  if (!(trunk_.spec == other.trunk_.spec) || heads_.size() != other.heads_.size()) return false;
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    if (!(heads_[k].spec == other.heads_[k].spec)) return false;
  }
  return true;
}

void TeamPolicy::save(std::ostream& os) const {
  io::write_string(os, "team");
  io::write_u64(os, heads_.size());
  write_network(os, trunk_);
  for (const auto& h : heads_) write_network(os, h);
}

TeamPolicy TeamPolicy::load(std::istream& is) {
  io::expect_tag(is, "team");
  const auto n = io::read_u64(is);
  if (n == 0 || n > 4096) throw std::runtime_error("TeamPolicy::load: implausible head count");
  Network trunk = read_network(is);
  std::vector<Network> heads;
  for (std::uint64_t k = 0; k < n; ++k) heads.push_back(read_network(is));
  return TeamPolicy(std::move(trunk), std::move(heads));
}

TeamGradient::TeamGradient(const TeamPolicy& team) : trunk(team.trunk().params.size(), 0.0) {
  for (std::size_t k = 0; k < team.num_agents(); ++k) heads.emplace_back(team.head(k).params.size(), 0.0);
}

void TeamGradient::zero() {
  std::fill(trunk.begin(), trunk.end(), 0.0);
  for (auto& h : heads) std::fill(h.begin(), h.end(), 0.0);
}

Eigen::MatrixXd actor_forward_batch(const TeamPolicy& team, std::size_t k, const Eigen::MatrixXd& obs,
                                    ActorTape* tape) {
  const auto& head = team.head(k);
  if (tape == nullptr) {
    return forward_batch(head.spec, head.params, forward_batch(team.trunk().spec, team.trunk().params, obs));
  }
  tape->agent = k;
  forward_batch(team.trunk().spec, team.trunk().params, obs, tape->trunk);
  forward_batch(head.spec, head.params, tape->trunk.output(), tape->head);
  return tape->head.output();
}

void actor_backward_batch(const TeamPolicy& team, const ActorTape& tape, const Eigen::MatrixXd& upstream,
                          TeamGradient& grad) {
  const auto& head = team.head(tape.agent);
  Eigen::MatrixXd feature_grad;
  backward_batch(head.spec, head.params, tape.head, upstream, grad.heads.at(tape.agent), &feature_grad);
  backward_batch(team.trunk().spec, team.trunk().params, tape.trunk, feature_grad, grad.trunk);
}

}  // namespace merl
