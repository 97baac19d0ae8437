#pragma once

// Training loops: the MERL generation (evolution + shared-buffer policy
// gradient + migration), the EA-only ablation, and the centralized
// MATD3 / MADDPG / mixed-reward baselines. Also held-out evaluation,
// checkpoints and CSV output.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "merl/config.hpp"
#include "merl/envs.hpp"
#include "merl/evolution.hpp"
#include "merl/learners.hpp"
#include "merl/replay.hpp"

namespace merl {

/// Joint environment steps, broken down by who took them.
class FrameCounter {
 public:
  void add(const std::string& component, std::uint64_t steps);
  std::uint64_t total() const { return total_; }
  std::uint64_t component(const std::string& name) const;
  const std::map<std::string, std::uint64_t>& components() const { return parts_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  std::uint64_t total_ = 0;
  std::map<std::string, std::uint64_t> parts_;
};

/// One recorded joint step.
struct StepRecord {
  JointObservation obs;
  JointAction actions;
  std::vector<double> local;
  double global = 0.0;
  JointObservation next_obs;
  bool done = false;
  std::vector<double> prey_obs, prey_action, prey_next_obs;
  double prey_reward = 0.0;
};
using EpisodeTrace = std::vector<StepRecord>;

/// The predator-prey adversary. Inactive for other tasks.
class PreyAgent {
 public:
  PreyAgent() = default;
  PreyAgent(const ExperimentConfig& cfg, RngStream& init_rng);

  bool active() const { return active_; }
  PreyPolicy policy() const { return policy_; }
  std::vector<double> act(const env::Environment& env, std::span<const double> obs, RngStream* noise_rng,
                          double sigma) const;

  /// Adds the prey transitions of the given episodes, in order.
  void commit(const std::vector<EpisodeTrace>& traces);
  /// DDPG updates on the prey buffer; no-op for scripted prey or before learn_start.
  void train(RngStream& rng, std::size_t updates, std::size_t learn_start);
  const ReplayBuffer* buffer() const { return buffer_.get(); }
  const Td3Learner* learner() const { return learner_.get(); }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  bool active_ = false;
  PreyPolicy policy_ = PreyPolicy::Static;
  std::shared_ptr<Td3Learner> learner_;
  std::shared_ptr<ReplayBuffer> buffer_;
};

struct EpisodeOptions {
  std::optional<double> noise;  // team exploration sigma
  double prey_noise = 0.0;
  bool record = true;
};

/// Runs one episode from a fresh reset drawn from rng. Returns the terminal
/// global reward.
double run_episode(const TeamPolicy& team, env::Environment& env, const PreyAgent& prey, const EpisodeOptions& opts,
                   RngStream& rng, EpisodeTrace* trace);

struct RolloutResult {
  double fitness = 0.0;                 // mean terminal global reward
  std::vector<double> episode_fitness;  // per episode
  std::uint64_t frames = 0;
  std::vector<EpisodeTrace> traces;
};

/// xi episodes of team; traces are kept for a later ordered commit.
RolloutResult rollout(const TeamPolicy& team, const env::EnvConfig& env_cfg, const PreyAgent& prey,
                      std::optional<double> noise, std::size_t xi, RngStream& rng, double prey_noise = 0.0);

/// Same, appending each agent's (o, a, l, o', done) to buffer k as it goes.
double rollout(const TeamPolicy& team, ReplaySet& buffers, std::optional<double> noise, std::size_t xi,
               env::Environment& env, RngStream& rng);

/// Per-agent local-reward transitions into buffers[k].
void commit_local(const std::vector<EpisodeTrace>& traces, ReplaySet& buffers);

/// Timestep-aligned joint transitions; reward row k is agent k's training
/// reward under mode. Team reward is paid at the terminal step only.
void commit_joint(const std::vector<EpisodeTrace>& traces, ReplayBuffer& joint, RewardMode mode,
                  MixedReward* mixer);

struct EvalReport {
  std::uint64_t frames = 0;
  std::optional<std::uint64_t> champion_id;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> scores;
};

/// Noiseless terminal g on instances seeded seed_base, seed_base + 1, ...
EvalReport evaluate_team(const TeamPolicy& team, const env::EnvConfig& env_cfg, const PreyAgent& prey,
                         std::size_t instances, std::uint64_t seed_base);

struct MetricRow {
  std::uint64_t frames = 0;
  std::uint64_t generation = 0;
  double champion_fitness = 0.0;
  double eval_mean = 0.0;
  double eval_std = 0.0;
  double selection_rate = 0.0;  // NaN when no migrant has been resolved
  double wall_time = 0.0;
};

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricRow& row);

/// Columns: t,body_id,kind,x,y,local_reward,global_reward,observed
void write_trajectory(std::ostream& os, const TeamPolicy& team, const env::EnvConfig& env_cfg,
                      const PreyAgent& prey, std::uint64_t seed);

/// Owns the full training state of one run.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  ExperimentConfig& config() { return cfg_; }
  bool done() const { return frames_.total() >= cfg_.frame_budget; }

  /// Held-out score of the untrained starting point (mean over the initial
  /// population, or the initial actor). No frames are consumed.
  MetricRow initial_row();

  /// One generation (population algorithms) or one block of
  /// eval_every_episodes training episodes (centralized algorithms).
  MetricRow step();

  /// Population algorithms, pieces of one generation.
  void evaluate_population();
  void evolve();
  void train_pg();
  void migrate_pg();

  /// The team that is reported: best-fitness member of the last evaluation,
  /// or the centralized actor.
  const TeamPolicy& champion() const;
  EvalReport evaluate_champion() const;

  const FrameCounter& frames() const { return frames_; }
  const Population& population() const { return pop_; }
  Population& population() { return pop_; }
  const Td3Learner& pg() const { return pg_; }
  Td3Learner& pg() { return pg_; }
  const ReplaySet& buffers() const { return buffers_; }
  const CentralLearner& central() const { return central_; }
  const MigrationLog& migrations() const { return migrations_; }
  const PreyAgent& prey() const { return prey_; }
  std::uint64_t generation() const { return generation_; }
  std::uint64_t rows_emitted() const { return rows_; }

  void save(std::ostream& os) const;
  static std::unique_ptr<Trainer> load(std::istream& is);

 private:
  MetricRow merl_step();
  MetricRow central_step();
  void finish_row(MetricRow& row);

  ExperimentConfig cfg_;
  FrameCounter frames_;
  Population pop_;
  Td3Learner pg_;
  ReplaySet buffers_;
  CentralLearner central_;
  std::unique_ptr<ReplayBuffer> joint_;
  MixedReward mixer_;
  PreyAgent prey_;
  MigrationLog migrations_;
  RngStream evo_rng_, learn_rng_;
  std::uint64_t generation_ = 0;
  std::uint64_t episodes_ = 0;
  std::uint64_t rows_ = 0;
  std::optional<TeamPolicy> champion_;
  std::optional<std::uint64_t> champion_id_;
  double champion_fitness_ = 0.0;
  double elapsed_ = 0.0;  // wall seconds accumulated before the last load
  std::chrono::steady_clock::time_point started_;
};

struct RunOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::optional<std::uint64_t> frame_budget;    // overrides the stored budget on resume
  std::string lockfile;                         // written to <out>/config.lock when non-empty
  std::ostream* progress = nullptr;
};

struct RunSummary {
  std::vector<MetricRow> rows;  // emitted by this process
  EvalReport final_eval;
  std::filesystem::path out_dir;
};

/// Trains until the frame budget, writing metrics.csv, migrations.csv,
/// trajectory.csv and checkpoint.bin into cfg.out_dir.
RunSummary run(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct SweepRow {
  std::string value;
  double final_eval_mean = 0.0;
  std::uint64_t frames = 0;
  std::filesystem::path out_dir;
};

/// One run per value of axis on top of base; writes <out>/sweep.csv.
/// Up to `parallel` runs execute concurrently.
std::vector<SweepRow> sweep(const Overrides& base, const std::string& axis, const std::vector<std::string>& values,
                            const std::filesystem::path& out, std::size_t parallel = 1);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
/// rethrown on the caller's thread.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace merl
