#include <doctest.h>

#include <sstream>

#include "merl/learners.hpp"
#include "test_util.hpp"

using namespace merl;

namespace {

// Critic whose output is the constant c regardless of input.
Network constant_critic(std::size_t in, double c) {
  Network n = Network::zeros(MlpSpec{in, {4}, 1, Activation::Linear});
  n.params.back() = c;
  return n;
}

Batch random_batch(RngStream& rng, std::size_t obs, std::size_t act, std::size_t reward_dim, std::size_t T) {
  Batch b;
  b.states.resize(static_cast<Eigen::Index>(obs), static_cast<Eigen::Index>(T));
  b.next_states.resize(static_cast<Eigen::Index>(obs), static_cast<Eigen::Index>(T));
  b.actions.resize(static_cast<Eigen::Index>(act), static_cast<Eigen::Index>(T));
  b.rewards.resize(static_cast<Eigen::Index>(reward_dim), static_cast<Eigen::Index>(T));
  for (auto* m : {&b.states, &b.next_states, &b.actions, &b.rewards}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-1, 1);
  }
  b.done.assign(T, 0);
  return b;
}

}  // namespace

TEST_SUITE("learners") {
  TEST_CASE("td3 target with constant critics") {
    RngStream rng(1);
    const std::size_t obs = 3, act = 2;
    TeamPolicy actor(2, obs, act, {4}, rng);
    SharedCritic critic(obs, act, constant_critic(obs + act, 2.0), constant_critic(obs + act, 3.0), 1e-3);
    Td3Hyper h;
    h.gamma = 0.95;
    h.mask_terminal = true;
    Td3Learner learner(actor, critic, h);

    Batch b = random_batch(rng, obs, act, 1, 4);
    b.rewards.setConstant(0.5);
    b.done[3] = 1;
    const Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(act, 4);

    const auto y = learner.td3_target(0, b, noise);
    for (int i = 0; i < 3; ++i) CHECK(y[i] == 0.5 + 0.95 * 2.0);
    CHECK(y[3] == 0.5);  // terminal transition drops the bootstrap
    CHECK(learner.td3_target(0, b, noise, CriticChoice::Second)[0] == 0.5 + 0.95 * 3.0);

    learner.hyper().mask_terminal = false;
    CHECK(learner.td3_target(0, b, noise)[3] == 0.5 + 0.95 * 2.0);
  }

  TEST_CASE("clipped double-Q never exceeds either critic") {
    RngStream rng(2);
    Td3Learner learner(2, 4, 2, {6}, {8, 8}, Td3Hyper{}, rng);
    const Batch b = random_batch(rng, 4, 2, 1, 64);
    const auto noise = smoothing_noise(rng, 2, 64, 0.2, 0.5);
    const auto y = learner.td3_target(1, b, noise, CriticChoice::Min);
    const auto y1 = learner.td3_target(1, b, noise, CriticChoice::First);
    const auto y2 = learner.td3_target(1, b, noise, CriticChoice::Second);
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(y[i] <= y1[i]);
      CHECK(y[i] <= y2[i]);
      CHECK((y[i] == y1[i] || y[i] == y2[i]));
    }
  }

  TEST_CASE("smoothing noise is clipped") {
    RngStream rng(3);
    const auto n = smoothing_noise(rng, 2, 5000, 1.0, 0.3);
    CHECK(n.maxCoeff() <= 0.3);
    CHECK(n.minCoeff() >= -0.3);
    CHECK(n.maxCoeff() == 0.3);  // sigma >> clip saturates
    CHECK(smoothing_noise(rng, 2, 10, 0.0, 0.0).isZero());
  }

  TEST_CASE("critic loss falls when fitting fixed targets") {
    RngStream rng(4);
    SharedCritic c(3, 2, {16}, true, 1e-2, rng);
    const Batch b = random_batch(rng, 3, 2, 1, 128);
    std::vector<double> y(128);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = b.states(0, static_cast<Eigen::Index>(i)) - b.actions(1, static_cast<Eigen::Index>(i));
    const double first = c.update(b.states, b.actions, y);
    double last = first;
    for (int i = 0; i < 300; ++i) last = c.update(b.states, b.actions, y);
    CHECK(last < 0.1 * first);
    CHECK_THROWS_AS(c.update(b.states, b.actions, std::vector<double>(3)), std::invalid_argument);
  }

  TEST_CASE("critic action gradient agrees with finite differences") {
    RngStream rng(5);
    SharedCritic c(3, 2, {7, 5}, false, 1e-3, rng);
    const Batch b = random_batch(rng, 3, 2, 1, 5);
    const double w = 0.7;
    const Eigen::MatrixXd g = c.action_gradient(b.states, b.actions, w);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      Eigen::MatrixXd ap = b.actions, am = b.actions;
      ap.data()[i] += h;
      am.data()[i] -= h;
      const double fd = w * (c.value(0, b.states, ap).sum() - c.value(0, b.states, am).sum()) / (2 * h);
      CHECK(test::rel_error(fd, g.data()[i]) < 1e-6);
    }
  }

  TEST_CASE("actor gradient agrees with finite differences") {
    RngStream rng(6);
    Td3Learner learner(2, 3, 2, {5}, {6}, Td3Hyper{}, rng);
    const Batch b = random_batch(rng, 3, 2, 1, 8);
    const std::size_t k = 1;
    const auto g = learner.actor_objective_gradient(k, b);
    ParamVector analytic = g.trunk;
    for (const auto& hg : g.heads) analytic.insert(analytic.end(), hg.begin(), hg.end());
    auto objective = [&](const ParamVector& flat, const std::vector<double>&) {
      Td3Learner copy = learner;
      copy.actor().unflatten(flat);
      return copy.actor_objective(k, b);
    };
    CHECK(test::max_rel_error_params(objective, learner.actor().flatten(), {}, analytic) < 1e-5);
  }

  TEST_CASE("actor updates increase the critic's value") {
    RngStream rng(7);
    Td3Learner learner(1, 3, 2, {8}, {8}, Td3Hyper{}, rng);
    const Batch b = random_batch(rng, 3, 2, 1, 64);
    const double before = learner.actor_objective(0, b);
    for (int i = 0; i < 20; ++i) learner.actor_update(0, b);
    CHECK(learner.actor_objective(0, b) > before);
  }

  TEST_CASE("actor updates are delayed per agent") {
    RngStream rng(8);
    Td3Hyper h;
    h.policy_freq = 2;
    Td3Learner learner(2, 3, 2, {4}, {4}, h, rng);
    const Batch b = random_batch(rng, 3, 2, 1, 16);
    learner.train_step(0, b, rng);
    CHECK(learner.actor_updates() == 0);
    learner.train_step(1, b, rng);
    CHECK(learner.actor_updates() == 0);  // agent 1 keeps its own count
    learner.train_step(0, b, rng);
    CHECK(learner.actor_updates() == 1);
    learner.train_step(0, b, rng);
    learner.train_step(0, b, rng);
    CHECK(learner.actor_updates() == 2);
    CHECK(learner.critic_updates() == 5);
    CHECK_THROWS_AS(learner.train_step(2, b, rng), std::out_of_range);
  }

  TEST_CASE("targets trail the online networks by tau") {
    RngStream rng(9);
    Td3Hyper h;
    h.tau = 0.25;
    Td3Learner learner(1, 3, 2, {4}, {4}, h, rng);
    const auto target0 = learner.actor_target().flatten();
    const Batch b = random_batch(rng, 3, 2, 1, 16);
    learner.actor_update(0, b);
    const auto online = learner.actor().flatten();
    const auto target1 = learner.actor_target().flatten();
    for (std::size_t i = 0; i < online.size(); ++i) {
      CHECK(target1[i] == doctest::Approx(0.25 * online[i] + 0.75 * target0[i]).epsilon(1e-14));
    }
  }

  TEST_CASE("ddpg degenerates to one critic and no smoothing") {
    const auto d = Td3Hyper::ddpg(Td3Hyper{});
    CHECK_FALSE(d.twin);
    CHECK(d.policy_freq == 1);
    CHECK(d.policy_noise == 0.0);
    RngStream rng(10);
    Td3Learner learner(1, 3, 2, {4}, {4}, d, rng);
    CHECK(learner.critic().num_critics() == 1);
    const Batch b = random_batch(rng, 3, 2, 1, 16);
    RngStream r1(3), r2(3);
    const auto y = learner.td3_target(0, b, r1);
    CHECK(y == learner.td3_target(0, b, Eigen::MatrixXd::Zero(2, 16), CriticChoice::First));
    learner.train_step(0, b, r2);
    CHECK(learner.actor_updates() == 1);
  }

  TEST_CASE("save and load reproduce later training") {
    RngStream rng(11);
    Td3Learner a(2, 3, 2, {4}, {5}, Td3Hyper{}, rng);
    const Batch b = random_batch(rng, 3, 2, 1, 16);
    RngStream r(1);
    a.train_step(0, b, r);
    std::stringstream ss;
    a.save(ss);
    Td3Learner back;
    back.load(ss);
    back.hyper() = a.hyper();
    RngStream ra(5), rb(5);
    CHECK(a.train_step(1, b, ra) == back.train_step(1, b, rb));
    CHECK(a.actor().flatten() == back.actor().flatten());
  }

  TEST_CASE("central learner checks joint batches") {
    RngStream rng(12);
    CentralLearner c(3, 4, 2, {6}, {8}, Td3Hyper{}, rng);
    CHECK(c.critic_input_dim() == 3 * 4 + 3 * 2);
    Batch good = random_batch(rng, 12, 6, 3, 32);
    CHECK_NOTHROW(c.check_joint_batch(good));
    Batch bad = random_batch(rng, 12, 6, 1, 32);
    CHECK_THROWS_AS(c.check_joint_batch(bad), std::invalid_argument);
    CHECK(c.critic(1).state_dim() == 12);
    CHECK(c.critic(1).action_dim() == 6);
  }

  TEST_CASE("central critic loss falls on a fixed batch") {
    RngStream rng(13);
    Td3Hyper h;
    h.critic_lr = 1e-2;
    CentralLearner c(2, 3, 2, {6}, {16}, h, rng);
    const Batch b = random_batch(rng, 6, 4, 2, 64);
    RngStream r(1);
    const double first = c.train_step(b, r);
    double last = first;
    for (int i = 0; i < 200; ++i) last = c.train_step(b, r);
    CHECK(std::isfinite(last));
    CHECK(last < first);
    CHECK(c.critic_updates() == 201 * 2);
  }

  TEST_CASE("min-max scaler") {
    MinMaxScaler s;
    CHECK(s.scale(5) == 0.0);
    s.observe(2);
    CHECK(s.scale(2) == 0.0);  // constant history
    s.observe(6);
    CHECK(s.scale(4) == 0.5);
    CHECK(s.scale(10) == 1.0);
    CHECK(s.scale(-3) == 0.0);
  }

  TEST_CASE("mixed reward hand arithmetic over ten steps") {
    MixedReward m(10.0);
    const std::vector<double> team{0, 0, 0, 0, 0, 0, 0, 0, 0, -2};
    std::vector<std::vector<double>> out;
    for (int t = 0; t < 10; ++t) {
      const std::vector<double> locals{-static_cast<double>(t), -0.5 * t};
      out.push_back(m.mix_step(locals, team[t]));
    }
    // Step 0: both scalers constant -> 0.
    CHECK(out[0] == std::vector<double>{0.0, 0.0});
    // Step 4: locals seen in [-4, 0]; team constant 0.
    CHECK(out[4][0] == doctest::Approx((-4.0 + 4.0) / 4.0));
    CHECK(out[4][1] == doctest::Approx((-2.0 + 4.0) / 4.0));
    // Step 9: locals in [-9, 0]; team in [-2, 0] and g = -2 scales to 0.
    CHECK(out[9][0] == doctest::Approx(0.0));
    CHECK(out[9][1] == doctest::Approx(4.5 / 9.0));
    CHECK(m.team_scaler().lo() == -2.0);
    std::stringstream ss;
    m.save(ss);
    MixedReward back;
    back.load(ss);
    CHECK(back.weight() == 10.0);
    CHECK(back.local_scaler().lo() == -9.0);
  }
}
