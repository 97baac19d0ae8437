#include "merl/replay.hpp"

#include <algorithm>
#include <string>

#include "merl/binary_io.hpp"

namespace merl {

ReplayBuffer::ReplayBuffer(std::size_t state_dim, std::size_t action_dim, std::size_t capacity,
                           std::size_t reward_dim)
    : state_dim_(state_dim), action_dim_(action_dim), capacity_(capacity), reward_dim_(reward_dim) {
  if (state_dim == 0 || action_dim == 0 || reward_dim == 0) throw std::invalid_argument("ReplayBuffer: dims must be >= 1");
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mutex_);
  return size_;
}

std::uint64_t ReplayBuffer::total_pushed() const {
  std::lock_guard lock(mutex_);
  return total_;
}

std::size_t ReplayBuffer::physical_index(std::size_t logical) const {
  return size_ < capacity_ ? logical : (cursor_ + logical) % capacity_;
}

void ReplayBuffer::push_unlocked(const double* state, const double* action, const double* rewards,
                                 const double* next_state, bool done) {
  if (size_ < capacity_ && cursor_ == size_) {
    states_.insert(states_.end(), state, state + state_dim_);
    actions_.insert(actions_.end(), action, action + action_dim_);
    rewards_.insert(rewards_.end(), rewards, rewards + reward_dim_);
    next_states_.insert(next_states_.end(), next_state, next_state + state_dim_);
    done_.push_back(done ? 1 : 0);
  } else {
    std::copy(state, state + state_dim_, states_.begin() + static_cast<std::ptrdiff_t>(cursor_ * state_dim_));
    std::copy(action, action + action_dim_, actions_.begin() + static_cast<std::ptrdiff_t>(cursor_ * action_dim_));
    std::copy(rewards, rewards + reward_dim_, rewards_.begin() + static_cast<std::ptrdiff_t>(cursor_ * reward_dim_));
    std::copy(next_state, next_state + state_dim_,
              next_states_.begin() + static_cast<std::ptrdiff_t>(cursor_ * state_dim_));
    done_[cursor_] = done ? 1 : 0;
  }
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
  ++total_;
}

void ReplayBuffer::push(std::span<const double> state, std::span<const double> action,
                        std::span<const double> rewards, std::span<const double> next_state, bool done) {
  if (state.size() != state_dim_ || next_state.size() != state_dim_ || action.size() != action_dim_ ||
      rewards.size() != reward_dim_) {
    throw std::invalid_argument("ReplayBuffer::push: transition dims (" + std::to_string(state.size()) + "," +
                                std::to_string(action.size()) + "," + std::to_string(rewards.size()) +
                                ") do not match buffer (" + std::to_string(state_dim_) + "," +
                                std::to_string(action_dim_) + "," + std::to_string(reward_dim_) + ")");
  }
  std::lock_guard lock(mutex_);
  push_unlocked(state.data(), action.data(), rewards.data(), next_state.data(), done);
}

void ReplayBuffer::push(const Transition& t) {
  const double r = t.local_reward;
  push(t.state, t.action, std::span<const double>(&r, 1), t.next_state, t.done);
}

Transition ReplayBuffer::at(std::size_t i) const {
  std::lock_guard lock(mutex_);
  if (reward_dim_ != 1) throw std::logic_error("ReplayBuffer::at: joint buffer");
  if (i >= size_) throw std::out_of_range("ReplayBuffer::at: index out of range");
  const std::size_t p = physical_index(i);
  Transition t;
  t.state.assign(states_.begin() + static_cast<std::ptrdiff_t>(p * state_dim_),
                 states_.begin() + static_cast<std::ptrdiff_t>((p + 1) * state_dim_));
  t.action.assign(actions_.begin() + static_cast<std::ptrdiff_t>(p * action_dim_),
                  actions_.begin() + static_cast<std::ptrdiff_t>((p + 1) * action_dim_));
  t.local_reward = rewards_[p];
  t.next_state.assign(next_states_.begin() + static_cast<std::ptrdiff_t>(p * state_dim_),
                      next_states_.begin() + static_cast<std::ptrdiff_t>((p + 1) * state_dim_));
  t.done = done_[p] != 0;
  return t;
}

Batch ReplayBuffer::sample(std::size_t batch_size, RngStream& rng) const {
  std::lock_guard lock(mutex_);
  if (size_ == 0) throw NotReadyError("replay buffer is empty: not ready to train");
  const auto t = static_cast<Eigen::Index>(batch_size);
  Batch b;
  b.states.resize(static_cast<Eigen::Index>(state_dim_), t);
  b.actions.resize(static_cast<Eigen::Index>(action_dim_), t);
  b.rewards.resize(static_cast<Eigen::Index>(reward_dim_), t);
  b.next_states.resize(static_cast<Eigen::Index>(state_dim_), t);
  b.done.resize(batch_size);
  for (Eigen::Index c = 0; c < t; ++c) {
    const std::size_t p = rng.uniform_index(size_);
    for (std::size_t d = 0; d < state_dim_; ++d) {
      b.states(static_cast<Eigen::Index>(d), c) = states_[p * state_dim_ + d];
      b.next_states(static_cast<Eigen::Index>(d), c) = next_states_[p * state_dim_ + d];
    }
    for (std::size_t d = 0; d < action_dim_; ++d) b.actions(static_cast<Eigen::Index>(d), c) = actions_[p * action_dim_ + d];
    for (std::size_t d = 0; d < reward_dim_; ++d) b.rewards(static_cast<Eigen::Index>(d), c) = rewards_[p * reward_dim_ + d];
    b.done[static_cast<std::size_t>(c)] = done_[p];
  }
  return b;
}

void ReplayBuffer::append_from(const ReplayBuffer& other) {
  if (&other == this) throw std::invalid_argument("ReplayBuffer::append_from: self append");
  if (other.state_dim_ != state_dim_ || other.action_dim_ != action_dim_ || other.reward_dim_ != reward_dim_) {
    throw std::invalid_argument("ReplayBuffer::append_from: dim mismatch");
  }
  std::scoped_lock lock(mutex_, other.mutex_);
  for (std::size_t i = 0; i < other.size_; ++i) {
    const std::size_t p = other.physical_index(i);
    push_unlocked(&other.states_[p * state_dim_], &other.actions_[p * action_dim_], &other.rewards_[p * reward_dim_],
                  &other.next_states_[p * state_dim_], other.done_[p] != 0);
  }
}

void ReplayBuffer::clear() {
  std::lock_guard lock(mutex_);
  states_.clear();
  actions_.clear();
  rewards_.clear();
  next_states_.clear();
  done_.clear();
  size_ = cursor_ = 0;
}

void ReplayBuffer::save(std::ostream& os) const {
  std::lock_guard lock(mutex_);
  io::write_string(os, "replay");
  io::write_u64(os, state_dim_);
  io::write_u64(os, action_dim_);
  io::write_u64(os, reward_dim_);
  io::write_u64(os, capacity_);
  io::write_u64(os, size_);
  io::write_u64(os, cursor_);
  io::write_u64(os, total_);
  io::write_f64_array(os, states_);
  io::write_f64_array(os, actions_);
  io::write_f64_array(os, rewards_);
  io::write_f64_array(os, next_states_);
  io::write_u64(os, done_.size());
  os.write(reinterpret_cast<const char*>(done_.data()), static_cast<std::streamsize>(done_.size()));
}

void ReplayBuffer::load(std::istream& is) {
  std::lock_guard lock(mutex_);
  io::expect_tag(is, "replay");
  if (io::read_u64(is) != state_dim_ || io::read_u64(is) != action_dim_ || io::read_u64(is) != reward_dim_) {
    throw std::runtime_error("ReplayBuffer::load: dims do not match");
  }
  capacity_ = io::read_u64(is);
  size_ = io::read_u64(is);
  cursor_ = io::read_u64(is);
  total_ = io::read_u64(is);
  states_ = io::read_f64_array(is);
  actions_ = io::read_f64_array(is);
  rewards_ = io::read_f64_array(is);
  next_states_ = io::read_f64_array(is);
  done_.resize(io::read_u64(is));
  is.read(reinterpret_cast<char*>(done_.data()), static_cast<std::streamsize>(done_.size()));
  if (!is || done_.size() != size_ || states_.size() != size_ * state_dim_) {
    throw std::runtime_error("ReplayBuffer::load: corrupt buffer");
  }
}

ReplaySet::ReplaySet(std::size_t num_agents, std::size_t state_dim, std::size_t action_dim, std::size_t capacity) {
  for (std::size_t k = 0; k < num_agents; ++k) {
    buffers_.push_back(std::make_unique<ReplayBuffer>(state_dim, action_dim, capacity));
  }
}

std::size_t ReplaySet::total_size() const {
  std::size_t n = 0;
  for (const auto& b : buffers_) n += b->size();
  return n;
}

void ReplaySet::append_from(const ReplaySet& other) {
  if (other.num_agents() != num_agents()) throw std::invalid_argument("ReplaySet::append_from: agent count mismatch");
  for (std::size_t k = 0; k < num_agents(); ++k) buffers_[k]->append_from(*other.buffers_[k]);
}

void ReplaySet::save(std::ostream& os) const {
  io::write_u64(os, buffers_.size());
  for (const auto& b : buffers_) b->save(os);
}

void ReplaySet::load(std::istream& is) {
  if (io::read_u64(is) != buffers_.size()) throw std::runtime_error("ReplaySet::load: agent count mismatch");
  for (auto& b : buffers_) b->load(is);
}

}  // namespace merl
