#include <benchmark/benchmark.h>

#include "merl/config.hpp"
#include "merl/evolution.hpp"
#include "merl/learners.hpp"
#include "merl/trainer.hpp"

using namespace merl;

namespace {

void BM_ActorForwardBatch(benchmark::State& state) {
  RngStream rng(1);
  const auto width = static_cast<std::size_t>(state.range(0));
  TeamPolicy team(3, 14, 2, {width, width}, rng);
  Eigen::MatrixXd obs = Eigen::MatrixXd::Random(14, 256);
  for (auto _ : state) benchmark::DoNotOptimize(actor_forward_batch(team, 1, obs));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_ActorForwardBatch)->Arg(32)->Arg(100);

void BM_Td3TrainStep(benchmark::State& state) {
  RngStream rng(2);
  const auto width = static_cast<std::size_t>(state.range(0));
  Td3Hyper h;
  Td3Learner learner(3, 14, 2, {width, width}, {width, width}, h, rng);
  ReplayBuffer buf(14, 2, 10000);
  for (int i = 0; i < 5000; ++i) {
    std::vector<double> s(14), a(2), s2(14);
    for (auto& v : s) v = rng.uniform(-1, 1);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : s2) v = rng.uniform(-1, 1);
    const double r = rng.normal();
    buf.push(s, a, std::span<const double>(&r, 1), s2, false);
  }
  for (auto _ : state) learner.train_step(0, buf.sample(128, rng), rng);
}
BENCHMARK(BM_Td3TrainStep)->Arg(32)->Arg(100);

void BM_CoopNavEpisode(benchmark::State& state) {
  auto cfg = default_config(env::Task::CoopNav, Algorithm::Merl);
  RngStream rng(3);
  TeamPolicy team(3, cfg.env.obs_dim(), 2, {32, 32}, rng);
  env::Environment env(cfg.env);
  PreyAgent prey;
  for (auto _ : state) benchmark::DoNotOptimize(run_episode(team, env, prey, EpisodeOptions{0.1, 0.0, true}, rng, nullptr));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.env.episode_length));
}
BENCHMARK(BM_CoopNavEpisode);

void BM_RoverObserve(benchmark::State& state) {
  auto cfg = default_config(env::Task::Rover, Algorithm::Merl).env;
  cfg.coupling = 3;
  cfg.num_agents = 6;
  RngStream rng(4);
  const auto s = env::reset(cfg, rng);
  for (auto _ : state) benchmark::DoNotOptimize(env::rover_observe(s, 0, cfg));
}
BENCHMARK(BM_RoverObserve);

void BM_NextGeneration(benchmark::State& state) {
  auto cfg = default_config(env::Task::CoopNav, Algorithm::Merl);
  RngStream rng(5);
  std::vector<TeamPolicy> teams;
  for (std::size_t i = 0; i < cfg.pop_size; ++i) teams.push_back(TeamPolicy(3, cfg.env.obs_dim(), 2, {100, 100}, rng));
  Population pop(std::move(teams));
  for (std::size_t i = 0; i < pop.size(); ++i) pop.set_fitness(i, rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(next_generation(pop, cfg.evolution, rng));
}
BENCHMARK(BM_NextGeneration);

}  // namespace
BENCHMARK_MAIN();
