#include "merl/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "merl/binary_io.hpp"

namespace merl {

namespace {

constexpr const char* kCheckpointMagic = "merl-checkpoint-v1";

// Stream tags for derive_seed.
enum : std::uint64_t {
  kInitStream = 1,
  kEvoStream = 2,
  kLearnStream = 3,
  kRolloutStream = 4,
  kEpisodeStream = 5,
};
enum : std::uint64_t { kFitnessRollout = 0, kNoisyRollout = 1, kPgRollout = 2 };

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

std::vector<double> concat(const JointObservation& parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return nan();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.empty()) return nan();
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

void push_joint(const StepRecord& r, ReplayBuffer& joint, RewardMode mode, MixedReward* mixer) {
  const std::size_t n = r.local.size();
  const double team = r.done ? r.global : 0.0;
  std::vector<double> rewards(n);
  switch (mode) {
    case RewardMode::Local:
      rewards = r.local;
      break;
    case RewardMode::Global:
      std::fill(rewards.begin(), rewards.end(), team);
      break;
    case RewardMode::Mixed:
      if (mixer == nullptr) throw std::invalid_argument("commit_joint: mixed mode needs a MixedReward");
      rewards = mixer->mix_step(r.local, team);
      break;
  }
  const auto s = concat(r.obs), a = concat(r.actions), s2 = concat(r.next_obs);
  joint.push(s, a, rewards, s2, r.done);
}

}  // namespace

void FrameCounter::add(const std::string& component, std::uint64_t steps) {
  parts_[component] += steps;
  total_ += steps;
}

std::uint64_t FrameCounter::component(const std::string& name) const {
  const auto it = parts_.find(name);
  return it == parts_.end() ? 0 : it->second;
}

void FrameCounter::save(std::ostream& os) const {
  io::write_u64(os, total_);
  io::write_u64(os, parts_.size());
  for (const auto& [k, v] : parts_) {
    io::write_string(os, k);
    io::write_u64(os, v);
  }
}

void FrameCounter::load(std::istream& is) {
  total_ = io::read_u64(is);
  parts_.clear();
  const auto n = io::read_u64(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto k = io::read_string(is);
    parts_[k] = io::read_u64(is);
  }
}

PreyAgent::PreyAgent(const ExperimentConfig& cfg, RngStream& init_rng) {
  if (cfg.env.task != env::Task::PredatorPrey) return;
  active_ = true;
  policy_ = cfg.prey_policy;
  if (policy_ == PreyPolicy::Ddpg) {
    learner_ = std::make_shared<Td3Learner>(1, cfg.env.prey_obs_dim(), env::EnvConfig::action_dim(),
                                            cfg.actor_hidden, cfg.critic_hidden, Td3Hyper::ddpg(cfg.td3), init_rng);
    buffer_ = std::make_shared<ReplayBuffer>(cfg.env.prey_obs_dim(), env::EnvConfig::action_dim(), cfg.buffer_size);
  }
}

std::vector<double> PreyAgent::act(const env::Environment& env, std::span<const double> obs, RngStream* noise_rng,
                                   double sigma) const {
  if (!active_ || policy_ == PreyPolicy::Static) return {0.0, 0.0};
  if (policy_ == PreyPolicy::Flee) {
    const auto& st = env.state();
    std::size_t nearest = 0;
    for (std::size_t k = 1; k < st.pos.size(); ++k) {
      if (env::distance(st.pos[k], st.prey_pos) < env::distance(st.pos[nearest], st.prey_pos)) nearest = k;
    }
    const auto away = st.prey_pos - st.pos[nearest];
    const double d = away.norm();
    if (d == 0.0) return {1.0, 0.0};
    return {away.x / d, away.y / d};
  }
  std::optional<ExplorationNoise> noise;
  if (noise_rng != nullptr && sigma > 0.0) noise = ExplorationNoise{noise_rng, sigma};
  return learner_->actor().act(0, obs, noise);
}

void PreyAgent::commit(const std::vector<EpisodeTrace>& traces) {
  if (!buffer_) return;
  for (const auto& tr : traces) {
    for (const auto& r : tr) {
      const double rew = r.prey_reward;
      buffer_->push(r.prey_obs, r.prey_action, std::span<const double>(&rew, 1), r.prey_next_obs, r.done);
    }
  }
}

void PreyAgent::train(RngStream& rng, std::size_t updates, std::size_t learn_start) {
  if (!learner_ || buffer_->size() < std::max<std::size_t>(learn_start, 1)) return;
  for (std::size_t u = 0; u < updates; ++u) {
    learner_->train_step(0, buffer_->sample(learner_->hyper().batch_size, rng), rng);
  }
}

void PreyAgent::save(std::ostream& os) const {
  io::write_u64(os, active_ ? 1 : 0);
  io::write_u64(os, static_cast<std::uint64_t>(policy_));
  io::write_u64(os, learner_ ? 1 : 0);
  if (learner_) {
    learner_->save(os);
    buffer_->save(os);
  }
}

void PreyAgent::load(std::istream& is) {
  active_ = io::read_u64(is) != 0;
  policy_ = static_cast<PreyPolicy>(io::read_u64(is));
  const bool has = io::read_u64(is) != 0;
  if (has != static_cast<bool>(learner_)) throw std::runtime_error("checkpoint: prey learner does not match config");
  if (has) {
    learner_->load(is);
    buffer_->load(is);
  }
}

double run_episode(const TeamPolicy& team, env::Environment& env, const PreyAgent& prey, const EpisodeOptions& opts,
                   RngStream& rng, EpisodeTrace* trace) {
  auto obs = env.reset(rng);
  const bool adversary = env.has_adversary();
  std::vector<double> prey_obs;
  if (adversary) prey_obs = env.adversary_observation();
  std::optional<ExplorationNoise> noise;
  if (opts.noise && *opts.noise > 0.0) noise = ExplorationNoise{&rng, *opts.noise};
  double g = 0.0;
  for (;;) {
    auto actions = team.act_team(obs, noise);
    std::vector<double> prey_action;
    if (adversary) prey_action = prey.act(env, prey_obs, &rng, opts.prey_noise);
    auto res = env.step(actions, adversary ? &prey_action : nullptr);
    g = res.global;
    if (trace != nullptr && opts.record) {
      StepRecord r;
      r.obs = std::move(obs);
      r.actions = std::move(actions);
      r.local = res.local;
      r.global = res.global;
      r.next_obs = res.next_obs;
      r.done = res.done;
      if (adversary) {
        r.prey_obs = std::move(prey_obs);
        r.prey_action = std::move(prey_action);
        r.prey_next_obs = res.prey_next_obs;
        r.prey_reward = res.prey_reward;
      }
      trace->push_back(std::move(r));
    }
    if (res.done) break;
    obs = std::move(res.next_obs);
    prey_obs = std::move(res.prey_next_obs);
  }
  return g;
}

RolloutResult rollout(const TeamPolicy& team, const env::EnvConfig& env_cfg, const PreyAgent& prey,
                      std::optional<double> noise, std::size_t xi, RngStream& rng, double prey_noise) {
  if (xi == 0) throw std::invalid_argument("rollout: xi must be >= 1");
  env::Environment env(env_cfg);
  RolloutResult out;
  EpisodeOptions opts{noise, prey_noise, true};
  for (std::size_t e = 0; e < xi; ++e) {
    EpisodeTrace trace;
    out.episode_fitness.push_back(run_episode(team, env, prey, opts, rng, &trace));
    out.frames += trace.size();
    out.traces.push_back(std::move(trace));
  }
  out.fitness = mean_of(out.episode_fitness);
  return out;
}

double rollout(const TeamPolicy& team, ReplaySet& buffers, std::optional<double> noise, std::size_t xi,
               env::Environment& env, RngStream& rng) {
  if (xi == 0) throw std::invalid_argument("rollout: xi must be >= 1");
  PreyAgent none;
  double sum = 0.0;
  for (std::size_t e = 0; e < xi; ++e) {
    EpisodeTrace trace;
    sum += run_episode(team, env, none, EpisodeOptions{noise, 0.0, true}, rng, &trace);
    commit_local({trace}, buffers);
  }
  return sum / static_cast<double>(xi);
}

void commit_local(const std::vector<EpisodeTrace>& traces, ReplaySet& buffers) {
  for (const auto& tr : traces) {
    for (const auto& r : tr) {
      if (r.obs.size() != buffers.num_agents()) throw std::invalid_argument("commit_local: agent count mismatch");
      for (std::size_t k = 0; k < r.obs.size(); ++k) {
        const double l = r.local[k];
        buffers[k].push(r.obs[k], r.actions[k], std::span<const double>(&l, 1), r.next_obs[k], r.done);
      }
    }
  }
}

void commit_joint(const std::vector<EpisodeTrace>& traces, ReplayBuffer& joint, RewardMode mode,
                  MixedReward* mixer) {
  for (const auto& tr : traces) {
    for (const auto& r : tr) push_joint(r, joint, mode, mixer);
  }
}

EvalReport evaluate_team(const TeamPolicy& team, const env::EnvConfig& env_cfg, const PreyAgent& prey,
                         std::size_t instances, std::uint64_t seed_base) {
  env::Environment env(env_cfg);
  EvalReport rep;
  for (std::size_t i = 0; i < instances; ++i) {
    RngStream rng(seed_base + i);
    rep.scores.push_back(run_episode(team, env, prey, EpisodeOptions{std::nullopt, 0.0, false}, rng, nullptr));
  }
  rep.mean = mean_of(rep.scores);
  rep.stddev = stddev_of(rep.scores);
  return rep;
}

void write_metrics_header(std::ostream& os) {
  os << "frames,generation,champion_fitness,eval_mean,eval_std,selection_rate,wall_time\n";
}

void write_metrics_row(std::ostream& os, const MetricRow& row) {
  auto num = [&](double v) {
    if (std::isnan(v)) {
      os << "nan";
    } else {
      os << std::setprecision(17) << v;
    }
  };
  os << row.frames << ',' << row.generation << ',';
  num(row.champion_fitness);
  os << ',';
  num(row.eval_mean);
  os << ',';
  num(row.eval_std);
  os << ',';
  num(row.selection_rate);
  os << ',' << std::fixed << std::setprecision(3) << row.wall_time << std::defaultfloat << '\n';
}

void write_trajectory(std::ostream& os, const TeamPolicy& team, const env::EnvConfig& env_cfg,
                      const PreyAgent& prey, std::uint64_t seed) {
  env::Environment env(env_cfg);
  RngStream rng(seed);
  auto obs = env.reset(rng);
  const bool adversary = env.has_adversary();
  std::vector<double> prey_obs;
  if (adversary) prey_obs = env.adversary_observation();
  os << "t,body_id,kind,x,y,local_reward,global_reward,observed\n";
  os << std::setprecision(17);
  std::vector<double> local(env.num_agents(), 0.0);
  double global = 0.0;
  auto dump = [&] {
    const auto& st = env.state();
    for (std::size_t k = 0; k < st.pos.size(); ++k) {
      os << st.t << ',' << k << ",agent," << st.pos[k].x << ',' << st.pos[k].y << ',' << local[k] << ',' << global
         << ",\n";
    }
    for (std::size_t p = 0; p < st.pois.size(); ++p) {
      os << st.t << ',' << p << ",poi," << st.pois[p].x << ',' << st.pois[p].y << ",," << global << ','
         << (st.observed.empty() ? 0 : static_cast<int>(st.observed[p])) << '\n';
    }
    if (st.has_prey) os << st.t << ",0,prey," << st.prey_pos.x << ',' << st.prey_pos.y << ",," << global << ",\n";
  };
  dump();
  for (;;) {
    auto actions = team.act_team(obs);
    std::vector<double> prey_action;
    if (adversary) prey_action = prey.act(env, prey_obs, nullptr, 0.0);
    auto res = env.step(actions, adversary ? &prey_action : nullptr);
    local = res.local;
    global = res.global;
    dump();
    if (res.done) break;
    obs = std::move(res.next_obs);
    prey_obs = std::move(res.prey_next_obs);
  }
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------

Trainer::Trainer(ExperimentConfig cfg)
    : cfg_(std::move(cfg)),
      mixer_(cfg_.mixed_weight),
      evo_rng_(derive_seed(cfg_.seed, {kEvoStream})),
      learn_rng_(derive_seed(cfg_.seed, {kLearnStream})),
      started_(std::chrono::steady_clock::now()) {
  cfg_.validate();
  RngStream init(derive_seed(cfg_.seed, {kInitStream}));
  const std::size_t n = cfg_.env.num_agents, od = cfg_.env.obs_dim(), ad = env::EnvConfig::action_dim();
  if (is_population_algo(cfg_.algo)) {
    std::vector<TeamPolicy> teams;
    for (std::size_t i = 0; i < cfg_.pop_size; ++i) teams.emplace_back(n, od, ad, cfg_.actor_hidden, init);
    pop_ = Population(std::move(teams));
    if (cfg_.algo == Algorithm::Merl) {
      pg_ = Td3Learner(n, od, ad, cfg_.actor_hidden, cfg_.critic_hidden, cfg_.td3, init);
      buffers_ = ReplaySet(n, od, ad, cfg_.buffer_size);
    }
  } else {
    central_ = CentralLearner(n, od, ad, cfg_.actor_hidden, cfg_.critic_hidden, cfg_.td3, init);
    joint_ = std::make_unique<ReplayBuffer>(n * od, n * ad, cfg_.buffer_size, n);
  }
  prey_ = PreyAgent(cfg_, init);
}

const TeamPolicy& Trainer::champion() const {
  if (!is_population_algo(cfg_.algo)) return central_.actor();
  if (champion_) return *champion_;
  return pop_.team(0);
}

EvalReport Trainer::evaluate_champion() const {
  auto rep = evaluate_team(champion(), cfg_.env, prey_, cfg_.eval_instances, cfg_.eval_seed_base);
  rep.frames = frames_.total();
  rep.champion_id = champion_id_;
  return rep;
}

void Trainer::finish_row(MetricRow& row) {
  row.wall_time = elapsed_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  ++rows_;
}

MetricRow Trainer::initial_row() {
  MetricRow row;
  row.frames = frames_.total();
  row.generation = 0;
  row.champion_fitness = nan();
  row.selection_rate = nan();
  std::vector<double> scores;
  if (is_population_algo(cfg_.algo)) {
    std::vector<EvalReport> reps(pop_.size());
    parallel_for(pop_.size(), cfg_.workers, [&](std::size_t i) {
      reps[i] = evaluate_team(pop_.team(i), cfg_.env, prey_, cfg_.eval_instances, cfg_.eval_seed_base);
    });
    for (const auto& r : reps) scores.insert(scores.end(), r.scores.begin(), r.scores.end());
  } else {
    scores = evaluate_champion().scores;
  }
  row.eval_mean = mean_of(scores);
  row.eval_std = stddev_of(scores);
  finish_row(row);
  return row;
}

void Trainer::evaluate_population() {
  const std::size_t k = pop_.size();
  const bool merl = cfg_.algo == Algorithm::Merl;
  const std::size_t noisy = merl ? k : 0;
  const std::size_t pg = merl ? cfg_.rollout_size : 0;
  const double prey_noise = prey_.policy() == PreyPolicy::Ddpg ? cfg_.exploration_noise : 0.0;

  struct Job {
    std::uint64_t kind;
    std::size_t index;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < k; ++i) jobs.push_back({kFitnessRollout, i});
  for (std::size_t i = 0; i < noisy; ++i) jobs.push_back({kNoisyRollout, i});
  for (std::size_t i = 0; i < pg; ++i) jobs.push_back({kPgRollout, i});

  std::vector<RolloutResult> results(jobs.size());
  parallel_for(jobs.size(), cfg_.workers, [&](std::size_t j) {
    const auto& job = jobs[j];
    RngStream rng(derive_seed(cfg_.seed, {kRolloutStream, generation_, job.kind, job.index}));
    switch (job.kind) {
      case kFitnessRollout:
        results[j] = rollout(pop_.team(job.index), cfg_.env, prey_, std::nullopt, cfg_.rollouts_per_fitness, rng,
                             prey_noise);
        break;
      case kNoisyRollout:
        results[j] = rollout(pop_.team(job.index), cfg_.env, prey_, cfg_.exploration_noise, 1, rng, prey_noise);
        break;
      default:
        results[j] = rollout(pg_.actor(), cfg_.env, prey_, cfg_.exploration_noise, 1, rng, prey_noise);
        break;
    }
  });

  // Commit in job order so buffer contents do not depend on worker count.
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    auto& res = results[j];
    if (jobs[j].kind == kFitnessRollout) pop_.set_fitness(jobs[j].index, res.fitness);
    static const char* names[] = {"population_fitness", "population_noisy", "pg_rollouts"};
    frames_.add(names[jobs[j].kind], res.frames);
    if (merl) commit_local(res.traces, buffers_);
    prey_.commit(res.traces);
    res.traces.clear();
  }

  const auto best = rank(pop_).front();
  champion_ = pop_.team(best);
  champion_id_ = pop_.id(best);
  champion_fitness_ = *pop_.fitness(best);
}

void Trainer::evolve() {
  Lineage lin;
  pop_ = next_generation(pop_, cfg_.evolution, evo_rng_, &lin);
  migrations_.resolve(lin.selected_ids);
}

void Trainer::train_pg() {
  if (cfg_.algo == Algorithm::Merl) {
    const std::size_t need = std::max<std::size_t>(cfg_.learn_start, 1);
    for (std::size_t u = 0; u < cfg_.pg_updates_per_generation; ++u) {
      for (std::size_t k = 0; k < buffers_.num_agents(); ++k) {
        if (buffers_[k].size() < need) continue;
        pg_.train_step(k, buffers_[k].sample(cfg_.td3.batch_size, learn_rng_), learn_rng_);
      }
    }
  }
  prey_.train(learn_rng_, cfg_.pg_updates_per_generation, cfg_.learn_start);
}

void Trainer::migrate_pg() {
  if (cfg_.algo != Algorithm::Merl) return;
  if (generation_ % cfg_.migration_period != 0) return;
  migrate(pop_, pg_.actor(), &migrations_);
}

MetricRow Trainer::merl_step() {
  evaluate_population();
  const auto rep = evaluate_champion();
  evolve();
  train_pg();
  migrate_pg();
  ++generation_;

  MetricRow row;
  row.frames = frames_.total();
  row.generation = generation_;
  row.champion_fitness = champion_fitness_;
  row.eval_mean = rep.mean;
  row.eval_std = rep.stddev;
  row.selection_rate = migrations_.selection_rate().value_or(nan());
  return row;
}

MetricRow Trainer::central_step() {
  env::Environment env(cfg_.env);
  const bool adversary = env.has_adversary();
  const double prey_noise = prey_.policy() == PreyPolicy::Ddpg ? cfg_.exploration_noise : 0.0;
  const std::size_t need = std::max<std::size_t>(cfg_.learn_start, 1);
  std::vector<double> block;
  for (std::size_t e = 0; e < cfg_.eval_every_episodes && !done(); ++e) {
    RngStream rng(derive_seed(cfg_.seed, {kEpisodeStream, episodes_}));
    auto obs = env.reset(rng);
    std::vector<double> prey_obs;
    if (adversary) prey_obs = env.adversary_observation();
    const ExplorationNoise noise{&rng, cfg_.exploration_noise};
    for (;;) {
      StepRecord r;
      r.actions = central_.actor().act_team(obs, cfg_.exploration_noise > 0.0 ? std::optional(noise) : std::nullopt);
      if (adversary) r.prey_action = prey_.act(env, prey_obs, &rng, prey_noise);
      auto res = env.step(r.actions, adversary ? &r.prey_action : nullptr);
      frames_.add("central", 1);
      r.obs = std::move(obs);
      r.local = res.local;
      r.global = res.global;
      r.next_obs = res.next_obs;
      r.done = res.done;
      if (adversary) {
        r.prey_obs = std::move(prey_obs);
        r.prey_next_obs = res.prey_next_obs;
        r.prey_reward = res.prey_reward;
      }
      push_joint(r, *joint_, cfg_.reward_mode, &mixer_);
      const bool done_now = r.done;
      const double g = r.global;
      prey_.commit({EpisodeTrace{std::move(r)}});
      if (joint_->size() >= need) {
        for (std::size_t u = 0; u < cfg_.updates_per_step; ++u) {
          central_.train_step(joint_->sample(cfg_.td3.batch_size, learn_rng_), learn_rng_);
        }
      }
      prey_.train(learn_rng_, cfg_.updates_per_step, cfg_.learn_start);
      if (done_now) {
        block.push_back(g);
        break;
      }
      obs = std::move(res.next_obs);
      prey_obs = std::move(res.prey_next_obs);
    }
    ++episodes_;
  }
  const auto rep = evaluate_champion();
  ++generation_;
  MetricRow row;
  row.frames = frames_.total();
  row.generation = episodes_;
  row.champion_fitness = mean_of(block);
  row.eval_mean = rep.mean;
  row.eval_std = rep.stddev;
  row.selection_rate = nan();
  return row;
}

MetricRow Trainer::step() {
  MetricRow row = is_population_algo(cfg_.algo) ? merl_step() : central_step();
  finish_row(row);
  return row;
}

void Trainer::save(std::ostream& os) const {
  io::write_string(os, kCheckpointMagic);
  io::write_string(os, dump_config(cfg_));
  frames_.save(os);
  io::write_u64(os, generation_);
  io::write_u64(os, episodes_);
  io::write_u64(os, rows_);
  const double wall =
      elapsed_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  io::write_f64(os, wall);
  evo_rng_.save(os);
  learn_rng_.save(os);
  if (is_population_algo(cfg_.algo)) {
    pop_.save(os);
    migrations_.save(os);
    io::write_u64(os, champion_ ? 1 : 0);
    if (champion_) {
      champion_->save(os);
      io::write_u64(os, *champion_id_);
      io::write_f64(os, champion_fitness_);
    }
    if (cfg_.algo == Algorithm::Merl) {
      pg_.save(os);
      buffers_.save(os);
    }
  } else {
    central_.save(os);
    joint_->save(os);
    mixer_.save(os);
  }
  prey_.save(os);
}

std::unique_ptr<Trainer> Trainer::load(std::istream& is) {
  io::expect_tag(is, kCheckpointMagic);
  const auto cfg_text = io::read_string(is);
  auto cfg = resolve_config(parse_config_text(cfg_text)).config;
  auto t = std::make_unique<Trainer>(cfg);
  t->frames_.load(is);
  t->generation_ = io::read_u64(is);
  t->episodes_ = io::read_u64(is);
  t->rows_ = io::read_u64(is);
  t->elapsed_ = io::read_f64(is);
  t->started_ = std::chrono::steady_clock::now();
  t->evo_rng_.load(is);
  t->learn_rng_.load(is);
  if (is_population_algo(cfg.algo)) {
    t->pop_ = Population::load(is);
    t->migrations_.load(is);
    if (io::read_u64(is) != 0) {
      t->champion_ = TeamPolicy::load(is);
      t->champion_id_ = io::read_u64(is);
      t->champion_fitness_ = io::read_f64(is);
    }
    if (cfg.algo == Algorithm::Merl) {
      t->pg_.load(is);
      t->buffers_.load(is);
    }
  } else {
    t->central_.load(is);
    t->joint_->load(is);
    t->mixer_.load(is);
  }
  t->prey_.load(is);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return t;
}

// ---------------------------------------------------------------------------

namespace {

void save_checkpoint(const Trainer& t, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    t.save(f);
  }
  std::filesystem::rename(tmp, path);
}

/// Keeps the header and the first `rows` data lines of an existing metrics file.
void truncate_metrics(const std::filesystem::path& path, std::uint64_t rows) {
  std::vector<std::string> keep;
  {
    std::ifstream f(path);
    std::string line;
    while (keep.size() < rows + 1 && std::getline(f, line)) keep.push_back(line);
  }
  std::ofstream f(path, std::ios::trunc);
  if (keep.empty()) {
    write_metrics_header(f);
    return;
  }
  for (const auto& l : keep) f << l << '\n';
}

}  // namespace

RunSummary run(const ExperimentConfig& cfg, const RunOptions& opts) {
  std::unique_ptr<Trainer> trainer;
  if (opts.resume) {
    std::ifstream f(*opts.resume, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + opts.resume->string());
    trainer = Trainer::load(f);
    if (opts.frame_budget) trainer->config().frame_budget = *opts.frame_budget;
  } else {
    trainer = std::make_unique<Trainer>(cfg);
  }
  const auto& c = trainer->config();
  RunSummary summary;
  summary.out_dir = c.out_dir;
  std::filesystem::create_directories(summary.out_dir);
  if (!opts.lockfile.empty()) {
    std::ofstream lock(summary.out_dir / "config.lock");
    lock << opts.lockfile;
  }

  const auto metrics_path = summary.out_dir / "metrics.csv";
  if (opts.resume) {
    truncate_metrics(metrics_path, trainer->rows_emitted());
  } else {
    std::ofstream f(metrics_path, std::ios::trunc);
    write_metrics_header(f);
  }
  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());

  auto emit = [&](const MetricRow& row) {
    write_metrics_row(metrics, row);
    metrics.flush();
    summary.rows.push_back(row);
    if (opts.progress) {
      *opts.progress << "frames " << row.frames << "  gen " << row.generation << "  eval " << row.eval_mean
                     << "  champion " << row.champion_fitness << '\n';
    }
  };

  if (!trainer->done() && trainer->rows_emitted() == 0) emit(trainer->initial_row());
  std::size_t since_checkpoint = 0;
  const auto ckpt_path = summary.out_dir / "checkpoint.bin";
  while (!trainer->done()) {
    emit(trainer->step());
    if (c.checkpoint_every > 0 && ++since_checkpoint >= c.checkpoint_every) {
      save_checkpoint(*trainer, ckpt_path);
      since_checkpoint = 0;
    }
  }
  if (trainer->rows_emitted() > 0) summary.final_eval = trainer->evaluate_champion();
  save_checkpoint(*trainer, ckpt_path);
  if (is_population_algo(c.algo)) {
    std::ofstream mig(summary.out_dir / "migrations.csv");
    trainer->migrations().write_csv(mig);
  }
  if (c.dump_trajectory && trainer->rows_emitted() > 0) {
    std::ofstream traj(summary.out_dir / "trajectory.csv");
    write_trajectory(traj, trainer->champion(), c.env, trainer->prey(), c.eval_seed_base);
  }
  return summary;
}

std::vector<SweepRow> sweep(const Overrides& base, const std::string& axis, const std::vector<std::string>& values,
                            const std::filesystem::path& out, std::size_t parallel) {
  if (values.empty()) throw std::invalid_argument("sweep: no values given");
  std::vector<ResolvedConfig> configs;
  for (const auto& v : values) {
    Overrides o = base;
    o.add(axis, v, Source::Flag);
    o.add("out", (out / (axis + "_" + v)).string(), Source::Flag);
    configs.push_back(resolve_config(o));
  }
  std::vector<SweepRow> rows(values.size());
  parallel_for(values.size(), parallel, [&](std::size_t i) {
    RunOptions opts;
    opts.lockfile = configs[i].lockfile();
    const auto s = run(configs[i].config, opts);
    rows[i] = {values[i], s.final_eval.mean, s.rows.empty() ? 0 : s.rows.back().frames, s.out_dir};
  });
  std::filesystem::create_directories(out);
  std::ofstream csv(out / "sweep.csv");
  csv << "axis,value,final_eval_mean,frames,out_dir\n" << std::setprecision(17);
  for (const auto& r : rows) {
    csv << axis << ',' << r.value << ',' << r.final_eval_mean << ',' << r.frames << ',' << r.out_dir.string()
        << '\n';
  }
  return rows;
}

}  // namespace merl
