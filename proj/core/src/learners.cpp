#include "merl/learners.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>

#include "merl/binary_io.hpp"

namespace merl {

namespace {

MlpSpec critic_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden) {
  return MlpSpec{input_dim, hidden, 1, Activation::Linear};
}

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::domain_error(std::string(what) + ": non-finite value");
  }
}

Eigen::MatrixXd clamp_unit(Eigen::MatrixXd m) { return m.cwiseMax(-1.0).cwiseMin(1.0); }

void descend_team(TeamPolicy& actor, AdamState& trunk_adam, AdamState& head_adam, std::size_t k,
                  TeamGradient& ascent) {
  for (auto& g : ascent.trunk) g = -g;
  for (auto& g : ascent.heads[k]) g = -g;
  adam_step(trunk_adam, actor.trunk().params, ascent.trunk);
  adam_step(head_adam, actor.head(k).params, ascent.heads[k]);
}

}  // namespace

Td3Hyper Td3Hyper::ddpg(Td3Hyper base) {
  base.twin = false;
  base.policy_noise = 0.0;
  base.noise_clip = 0.0;
  base.policy_freq = 1;
  return base;
}

// ---------------------------------------------------------------- SharedCritic

SharedCritic::SharedCritic(std::size_t state_dim, std::size_t action_dim, const std::vector<std::size_t>& hidden,
                           bool twin, double lr, RngStream& rng)
    : state_dim_(state_dim), action_dim_(action_dim), twin_(twin) {
  const auto spec = critic_spec(state_dim + action_dim, hidden);
  for (std::size_t i = 0; i < num_critics(); ++i) {
    q_[i] = Network(spec, rng);
    target_[i] = q_[i];
    adam_[i] = AdamState(q_[i].params.size(), lr);
  }
}

SharedCritic::SharedCritic(std::size_t state_dim, std::size_t action_dim, Network q1, std::optional<Network> q2,
                           double lr)
    : state_dim_(state_dim), action_dim_(action_dim), twin_(q2.has_value()) {
  q_[0] = std::move(q1);
  if (q2) {
    if (!(q2->spec == q_[0].spec)) throw std::invalid_argument("SharedCritic: twin critics must share a spec");
    q_[1] = std::move(*q2);
  }
  for (std::size_t i = 0; i < num_critics(); ++i) {
    if (q_[i].spec.input_dim != state_dim + action_dim || q_[i].spec.output_dim != 1) {
      throw std::invalid_argument("SharedCritic: critic must map state+action to a scalar");
    }
    target_[i] = q_[i];
    adam_[i] = AdamState(q_[i].params.size(), lr);
  }
}

Eigen::MatrixXd SharedCritic::stack(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
  if (static_cast<std::size_t>(states.rows()) != state_dim_ || static_cast<std::size_t>(actions.rows()) != action_dim_ ||
      states.cols() != actions.cols()) {
    throw std::invalid_argument("SharedCritic: state/action batch shape mismatch");
  }
  Eigen::MatrixXd x(states.rows() + actions.rows(), states.cols());
  x.topRows(states.rows()) = states;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

Eigen::RowVectorXd SharedCritic::value(std::size_t i, const Eigen::MatrixXd& states,
                                       const Eigen::MatrixXd& actions) const {
  if (i >= num_critics()) throw std::out_of_range("SharedCritic::value: critic index");
  return forward_batch(q_[i].spec, q_[i].params, stack(states, actions)).row(0);
}

Eigen::RowVectorXd SharedCritic::target_value(CriticChoice choice, const Eigen::MatrixXd& states,
                                              const Eigen::MatrixXd& actions) const {
  const auto x = stack(states, actions);
  auto eval = [&](std::size_t i) -> Eigen::RowVectorXd {
    return forward_batch(target_[i].spec, target_[i].params, x).row(0);
  };
  switch (choice) {
    case CriticChoice::First:
      return eval(0);
    case CriticChoice::Second:
      if (!twin_) throw std::logic_error("SharedCritic: no second critic");
      return eval(1);
    case CriticChoice::Min:
      break;
  }
  if (!twin_) return eval(0);
  return eval(0).cwiseMin(eval(1));
}

double SharedCritic::update(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                            std::span<const double> targets) {
  const auto batch = static_cast<std::size_t>(states.cols());
  if (batch == 0) {
    std::cerr << "warning: critic update skipped on an empty batch\n";
    return 0.0;
  }
  if (targets.size() != batch) throw std::invalid_argument("SharedCritic::update: target count mismatch");
  check_finite(targets, "critic targets");
  const auto x = stack(states, actions);
  const Eigen::Map<const Eigen::RowVectorXd> y(targets.data(), static_cast<Eigen::Index>(batch));
  const double inv_t = 1.0 / static_cast<double>(batch);
  double loss = 0.0;
  for (std::size_t i = 0; i < num_critics(); ++i) {
    ForwardTape tape;
    forward_batch(q_[i].spec, q_[i].params, x, tape);
    const Eigen::RowVectorXd err = y - tape.output().row(0);
    loss += err.squaredNorm() * inv_t;
    const Eigen::MatrixXd upstream = (-2.0 * inv_t) * err;
    ParamVector grad(q_[i].params.size(), 0.0);
    backward_batch(q_[i].spec, q_[i].params, tape, upstream, grad);
    adam_step(adam_[i], q_[i].params, grad);
  }
  return loss;
}

Eigen::MatrixXd SharedCritic::action_gradient(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                              double weight) const {
  ForwardTape tape;
  forward_batch(q_[0].spec, q_[0].params, stack(states, actions), tape);
  const Eigen::MatrixXd upstream = Eigen::MatrixXd::Constant(1, states.cols(), weight);
  ParamVector scratch(q_[0].params.size(), 0.0);
  Eigen::MatrixXd input_grad;
  backward_batch(q_[0].spec, q_[0].params, tape, upstream, scratch, &input_grad);
  return input_grad.bottomRows(static_cast<Eigen::Index>(action_dim_));
}

void SharedCritic::soft_update_targets(double tau) {
  for (std::size_t i = 0; i < num_critics(); ++i) soft_update(target_[i].params, q_[i].params, tau);
}

void SharedCritic::save(std::ostream& os) const {
  io::write_string(os, "critic");
  io::write_u64(os, state_dim_);
  io::write_u64(os, action_dim_);
  io::write_u64(os, twin_ ? 1 : 0);
  for (std::size_t i = 0; i < num_critics(); ++i) {
    write_network(os, q_[i]);
    write_network(os, target_[i]);
    adam_[i].save(os);
  }
}

void SharedCritic::load(std::istream& is) {
  io::expect_tag(is, "critic");
  state_dim_ = io::read_u64(is);
  action_dim_ = io::read_u64(is);
  twin_ = io::read_u64(is) != 0;
  for (std::size_t i = 0; i < num_critics(); ++i) {
    q_[i] = read_network(is);
    target_[i] = read_network(is);
    adam_[i].load(is);
  }
}

Eigen::MatrixXd smoothing_noise(RngStream& rng, std::size_t action_dim, std::size_t batch, double sigma,
                                double clip) {
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(action_dim), static_cast<Eigen::Index>(batch));
  if (sigma <= 0.0) return n;
  for (Eigen::Index c = 0; c < n.cols(); ++c) {
    for (Eigen::Index r = 0; r < n.rows(); ++r) n(r, c) = std::clamp(rng.normal(sigma), -clip, clip);
  }
  return n;
}

// ---------------------------------------------------------------- Td3Learner

Td3Learner::Td3Learner(std::size_t num_agents, std::size_t obs_dim, std::size_t action_dim,
                       const std::vector<std::size_t>& actor_hidden, const std::vector<std::size_t>& critic_hidden,
                       const Td3Hyper& hyper, RngStream& init_rng)
    : actor_(num_agents, obs_dim, action_dim, actor_hidden, init_rng),
      actor_target_(actor_),
      critic_(obs_dim, action_dim, critic_hidden, hyper.twin, hyper.critic_lr, init_rng),
      hyper_(hyper) {
  init_optimizers();
}

Td3Learner::Td3Learner(TeamPolicy actor, SharedCritic critic, const Td3Hyper& hyper)
    : actor_(std::move(actor)), actor_target_(actor_), critic_(std::move(critic)), hyper_(hyper) {
  if (critic_.state_dim() != actor_.obs_dim() || critic_.action_dim() != actor_.action_dim()) {
    throw std::invalid_argument("Td3Learner: critic does not match actor dims");
  }
  init_optimizers();
}

void Td3Learner::init_optimizers() {
  if (hyper_.policy_freq == 0) throw std::invalid_argument("Td3Learner: policy_freq must be >= 1");
  trunk_adam_ = AdamState(actor_.trunk().params.size(), hyper_.actor_lr);
  head_adam_.clear();
  for (std::size_t k = 0; k < actor_.num_agents(); ++k) head_adam_.emplace_back(actor_.head(k).params.size(), hyper_.actor_lr);
  critic_updates_per_agent_.assign(actor_.num_agents(), 0);
}

std::vector<double> Td3Learner::td3_target(std::size_t k, const Batch& batch, RngStream& rng) const {
  const auto noise = smoothing_noise(rng, actor_.action_dim(), batch.size(), hyper_.policy_noise, hyper_.noise_clip);
  return td3_target(k, batch, noise, CriticChoice::Min);
}

std::vector<double> Td3Learner::td3_target(std::size_t k, const Batch& batch, const Eigen::MatrixXd& noise,
                                           CriticChoice choice) const {
  if (batch.rewards.rows() != 1) throw std::invalid_argument("td3_target: per-agent batch expected");
  const Eigen::MatrixXd next_actions = clamp_unit(actor_forward_batch(actor_target_, k, batch.next_states) + noise);
  const Eigen::RowVectorXd q = critic_.target_value(choice, batch.next_states, next_actions);
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool cut = hyper_.mask_terminal && batch.done[i] != 0;
    y[i] = batch.rewards(0, static_cast<Eigen::Index>(i)) + (cut ? 0.0 : hyper_.gamma * q(static_cast<Eigen::Index>(i)));
  }
  check_finite(y, "td3 target");
  return y;
}

double Td3Learner::critic_update(const Batch& batch, std::span<const double> targets) {
  return critic_.update(batch.states, batch.actions, targets);
}

double Td3Learner::actor_objective(std::size_t k, const Batch& batch) const {
  const Eigen::MatrixXd a = actor_forward_batch(actor_, k, batch.states);
  return critic_.value(0, batch.states, a).mean();
}

TeamGradient Td3Learner::actor_objective_gradient(std::size_t k, const Batch& batch) const {
  ActorTape tape;
  const Eigen::MatrixXd a = actor_forward_batch(actor_, k, batch.states, &tape);
  const Eigen::MatrixXd da = critic_.action_gradient(batch.states, a, 1.0 / static_cast<double>(batch.size()));
  TeamGradient grad(actor_);
  actor_backward_batch(actor_, tape, da, grad);
  return grad;
}

void Td3Learner::actor_update(std::size_t k, const Batch& batch) {
  auto grad = actor_objective_gradient(k, batch);
  descend_team(actor_, trunk_adam_, head_adam_.at(k), k, grad);
  ++actor_updates_total_;
  const auto src = actor_.flatten();
  auto dst = actor_target_.flatten();
  soft_update(dst, src, hyper_.tau);
  actor_target_.unflatten(dst);
  critic_.soft_update_targets(hyper_.tau);
}

double Td3Learner::train_step(std::size_t k, const Batch& batch, RngStream& rng) {
  if (k >= actor_.num_agents()) throw std::out_of_range("Td3Learner::train_step: agent index");
  const auto y = td3_target(k, batch, rng);
  const double loss = critic_update(batch, y);
  ++critic_updates_total_;
  if (++critic_updates_per_agent_[k] % hyper_.policy_freq == 0) actor_update(k, batch);
  return loss;
}

void Td3Learner::save(std::ostream& os) const {
  io::write_string(os, "td3");
  actor_.save(os);
  actor_target_.save(os);
  critic_.save(os);
  trunk_adam_.save(os);
  io::write_u64(os, head_adam_.size());
  for (const auto& a : head_adam_) a.save(os);
  for (auto c : critic_updates_per_agent_) io::write_u64(os, c);
  io::write_u64(os, critic_updates_total_);
  io::write_u64(os, actor_updates_total_);
}

void Td3Learner::load(std::istream& is) {
  io::expect_tag(is, "td3");
  actor_ = TeamPolicy::load(is);
  actor_target_ = TeamPolicy::load(is);
  critic_.load(is);
  trunk_adam_.load(is);
  head_adam_.resize(io::read_u64(is));
  for (auto& a : head_adam_) a.load(is);
  critic_updates_per_agent_.resize(actor_.num_agents());
  for (auto& c : critic_updates_per_agent_) c = io::read_u64(is);
  critic_updates_total_ = io::read_u64(is);
  actor_updates_total_ = io::read_u64(is);
}

// ---------------------------------------------------------------- CentralLearner

CentralLearner::CentralLearner(std::size_t num_agents, std::size_t obs_dim, std::size_t action_dim,
                               const std::vector<std::size_t>& actor_hidden,
                               const std::vector<std::size_t>& critic_hidden, const Td3Hyper& hyper,
                               RngStream& init_rng)
    : actor_(num_agents, obs_dim, action_dim, actor_hidden, init_rng), actor_target_(actor_), hyper_(hyper) {
  if (hyper_.policy_freq == 0) throw std::invalid_argument("CentralLearner: policy_freq must be >= 1");
  for (std::size_t k = 0; k < num_agents; ++k) {
    critics_.emplace_back(num_agents * obs_dim, num_agents * action_dim, critic_hidden, hyper.twin, hyper.critic_lr,
                          init_rng);
  }
  trunk_adam_ = AdamState(actor_.trunk().params.size(), hyper_.actor_lr);
  for (std::size_t k = 0; k < num_agents; ++k) head_adam_.emplace_back(actor_.head(k).params.size(), hyper_.actor_lr);
  critic_updates_per_agent_.assign(num_agents, 0);
}

void CentralLearner::check_joint_batch(const Batch& batch) const {
  if (static_cast<std::size_t>(batch.states.rows()) != joint_obs_dim() ||
      static_cast<std::size_t>(batch.next_states.rows()) != joint_obs_dim() ||
      static_cast<std::size_t>(batch.actions.rows()) != joint_action_dim() ||
      static_cast<std::size_t>(batch.rewards.rows()) != num_agents()) {
    throw std::invalid_argument("CentralLearner: joint batch is not aligned with " + std::to_string(num_agents()) +
                                " agents");
  }
}

Eigen::MatrixXd CentralLearner::agent_rows(const Eigen::MatrixXd& joint, std::size_t k, std::size_t dim) const {
  return joint.middleRows(static_cast<Eigen::Index>(k * dim), static_cast<Eigen::Index>(dim));
}

std::vector<double> CentralLearner::target(std::size_t k, const Batch& batch, RngStream& rng) const {
  check_joint_batch(batch);
  const std::size_t o = actor_.obs_dim(), a = actor_.action_dim();
  Eigen::MatrixXd next_actions(static_cast<Eigen::Index>(joint_action_dim()), batch.next_states.cols());
  for (std::size_t j = 0; j < num_agents(); ++j) {
    const auto noise = smoothing_noise(rng, a, batch.size(), hyper_.policy_noise, hyper_.noise_clip);
    next_actions.middleRows(static_cast<Eigen::Index>(j * a), static_cast<Eigen::Index>(a)) =
        clamp_unit(actor_forward_batch(actor_target_, j, agent_rows(batch.next_states, j, o)) + noise);
  }
  const Eigen::RowVectorXd q = critics_.at(k).target_value(CriticChoice::Min, batch.next_states, next_actions);
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool cut = hyper_.mask_terminal && batch.done[i] != 0;
    y[i] = batch.rewards(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) +
           (cut ? 0.0 : hyper_.gamma * q(static_cast<Eigen::Index>(i)));
  }
  check_finite(y, "central target");
  return y;
}

double CentralLearner::critic_update(std::size_t k, const Batch& batch, std::span<const double> targets) {
  check_joint_batch(batch);
  return critics_.at(k).update(batch.states, batch.actions, targets);
}

void CentralLearner::actor_update(std::size_t k, const Batch& batch) {
  check_joint_batch(batch);
  const std::size_t o = actor_.obs_dim(), a = actor_.action_dim();
  ActorTape tape;
  Eigen::MatrixXd joint_actions = batch.actions;
  const auto rows = static_cast<Eigen::Index>(a);
  joint_actions.middleRows(static_cast<Eigen::Index>(k * a), rows) =
      actor_forward_batch(actor_, k, agent_rows(batch.states, k, o), &tape);
  const Eigen::MatrixXd da = critics_[k].action_gradient(batch.states, joint_actions, 1.0 / static_cast<double>(batch.size()));
  TeamGradient grad(actor_);
  actor_backward_batch(actor_, tape, da.middleRows(static_cast<Eigen::Index>(k * a), rows), grad);
  descend_team(actor_, trunk_adam_, head_adam_.at(k), k, grad);
  ++actor_updates_total_;
  const auto src = actor_.flatten();
  auto dst = actor_target_.flatten();
  soft_update(dst, src, hyper_.tau);
  actor_target_.unflatten(dst);
  critics_[k].soft_update_targets(hyper_.tau);
}

double CentralLearner::train_step(const Batch& batch, RngStream& rng) {
  double loss = 0.0;
  for (std::size_t k = 0; k < num_agents(); ++k) {
    const auto y = target(k, batch, rng);
    loss += critic_update(k, batch, y);
    ++critic_updates_total_;
    if (++critic_updates_per_agent_[k] % hyper_.policy_freq == 0) actor_update(k, batch);
  }
  return loss / static_cast<double>(num_agents());
}

void CentralLearner::save(std::ostream& os) const {
  io::write_string(os, "central");
  actor_.save(os);
  actor_target_.save(os);
  io::write_u64(os, critics_.size());
  for (const auto& c : critics_) c.save(os);
  trunk_adam_.save(os);
  for (const auto& h : head_adam_) h.save(os);
  for (auto c : critic_updates_per_agent_) io::write_u64(os, c);
  io::write_u64(os, critic_updates_total_);
  io::write_u64(os, actor_updates_total_);
}

void CentralLearner::load(std::istream& is) {
  io::expect_tag(is, "central");
  actor_ = TeamPolicy::load(is);
  actor_target_ = TeamPolicy::load(is);
  critics_.resize(io::read_u64(is));
  for (auto& c : critics_) c.load(is);
  trunk_adam_.load(is);
  head_adam_.resize(actor_.num_agents());
  for (auto& h : head_adam_) h.load(is);
  critic_updates_per_agent_.resize(actor_.num_agents());
  for (auto& c : critic_updates_per_agent_) c = io::read_u64(is);
  critic_updates_total_ = io::read_u64(is);
  actor_updates_total_ = io::read_u64(is);
}

// ---------------------------------------------------------------- mixed reward

void MinMaxScaler::observe(double x) {
  if (!seen_) {
    lo_ = hi_ = x;
    seen_ = true;
    return;
  }
  lo_ = std::min(lo_, x);
  hi_ = std::max(hi_, x);
}

double MinMaxScaler::scale(double x) const {
  if (!seen_ || hi_ == lo_) return 0.0;
  return std::clamp((x - lo_) / (hi_ - lo_), 0.0, 1.0);
}

void MinMaxScaler::save(std::ostream& os) const {
  io::write_f64(os, lo_);
  io::write_f64(os, hi_);
  io::write_u64(os, seen_ ? 1 : 0);
}

void MinMaxScaler::load(std::istream& is) {
  lo_ = io::read_f64(is);
  hi_ = io::read_f64(is);
  seen_ = io::read_u64(is) != 0;
}

std::vector<double> MixedReward::mix_step(std::span<const double> locals, double team) {
  for (double l : locals) local_.observe(l);
  team_.observe(team);
  const double team_term = weight_ * team_.scale(team);
  std::vector<double> out;
  out.reserve(locals.size());
  for (double l : locals) out.push_back(local_.scale(l) + team_term);
  return out;
}

void MixedReward::save(std::ostream& os) const {
  io::write_f64(os, weight_);
  local_.save(os);
  team_.save(os);
}

void MixedReward::load(std::istream& is) {
  weight_ = io::read_f64(is);
  local_.load(is);
  team_.load(is);
}

}  // namespace merl
