#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include "merl/rng.hpp"

namespace merl {

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double local_reward = 0.0;
  std::vector<double> next_state;
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Sampled minibatch; one column per transition.
struct Batch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::MatrixXd rewards;  // reward_dim x T
  Eigen::MatrixXd next_states;
  std::vector<std::uint8_t> done;

  std::size_t size() const { return static_cast<std::size_t>(states.cols()); }
};

class NotReadyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed-capacity FIFO transition store. Each public operation holds the
/// buffer's lock, so pushes and samples from different threads interleave
/// atomically. Joint (multi-agent, timestep-aligned) storage uses
/// reward_dim > 1.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t state_dim, std::size_t action_dim, std::size_t capacity,
               std::size_t reward_dim = 1);

  ReplayBuffer(const ReplayBuffer&) = delete;
  ReplayBuffer& operator=(const ReplayBuffer&) = delete;

  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t reward_dim() const { return reward_dim_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  /// Total pushes over the buffer's lifetime.
  std::uint64_t total_pushed() const;

  void push(const Transition& t);
  void push(std::span<const double> state, std::span<const double> action, std::span<const double> rewards,
            std::span<const double> next_state, bool done);

  /// i-th stored transition, oldest first. Requires reward_dim == 1.
  Transition at(std::size_t i) const;

  /// T uniform draws with replacement. Throws NotReadyError when empty.
  Batch sample(std::size_t batch_size, RngStream& rng) const;

  /// Pushes every transition of other (oldest first).
  void append_from(const ReplayBuffer& other);

  void clear();

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  std::size_t physical_index(std::size_t logical) const;
  void push_unlocked(const double* state, const double* action, const double* rewards, const double* next_state,
                     bool done);

  std::size_t state_dim_, action_dim_, capacity_, reward_dim_;
  std::vector<double> states_, actions_, rewards_, next_states_;
  std::vector<std::uint8_t> done_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;  // next write slot
  std::uint64_t total_ = 0;
  mutable std::mutex mutex_;
};

/// One buffer per agent; agent k's transitions only ever land in buffer k.
class ReplaySet {
 public:
  ReplaySet() = default;
  ReplaySet(std::size_t num_agents, std::size_t state_dim, std::size_t action_dim, std::size_t capacity);

  std::size_t num_agents() const { return buffers_.size(); }
  ReplayBuffer& operator[](std::size_t k) { return *buffers_.at(k); }
  const ReplayBuffer& operator[](std::size_t k) const { return *buffers_.at(k); }
  std::size_t total_size() const;
  void append_from(const ReplaySet& other);

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  std::vector<std::unique_ptr<ReplayBuffer>> buffers_;
};

}  // namespace merl
