#include <doctest.h>

#include <sstream>

#include "merl/policy.hpp"
#include "test_util.hpp"

using namespace merl;

TEST_SUITE("policy") {
  TEST_CASE("topology: shared trunk, one head per agent") {
    RngStream rng(1);
    TeamPolicy t(3, 10, 2, {16, 8}, rng);
    CHECK(t.num_agents() == 3);
    CHECK(t.obs_dim() == 10);
    CHECK(t.action_dim() == 2);
    CHECK(t.trunk().spec.output_dim == 16);
    CHECK(t.head(2).spec.input_dim == 16);
    CHECK(t.head(2).spec.hidden_dims == std::vector<std::size_t>{8});
    CHECK(t.param_count() == (10 * 16 + 16) + 3 * ((16 * 8 + 8) + (8 * 2 + 2)));
    CHECK_THROWS_AS(t.head(3), std::out_of_range);
    CHECK_THROWS_AS(TeamPolicy(0, 4, 2, {4}, rng), std::invalid_argument);
    CHECK_THROWS_AS(TeamPolicy(2, 4, 2, {}, rng), std::invalid_argument);
  }

  TEST_CASE("act composes trunk and head") {
    RngStream rng(2);
    TeamPolicy t(2, 3, 2, {5}, rng);
    const std::vector<double> obs{0.1, -0.4, 0.9};
    const auto h = t.trunk()(obs);
    const auto a = t.head(1)(h);
    CHECK(t.act(1, obs) == a);
    for (double v : a) CHECK(std::abs(v) <= 1.0);
  }

  TEST_CASE("noisy actions are clamped and reproducible") {
    RngStream rng(3);
    TeamPolicy t(1, 2, 2, {4}, rng);
    const std::vector<double> obs{0.3, 0.3};
    RngStream n1(7), n2(7);
    for (int i = 0; i < 200; ++i) {
      const auto a = t.act(0, obs, ExplorationNoise{&n1, 5.0});
      const auto b = t.act(0, obs, ExplorationNoise{&n2, 5.0});
      CHECK(a == b);
      for (double v : a) CHECK(std::abs(v) <= 1.0);
    }
    CHECK_THROWS_AS(t.act(0, obs, ExplorationNoise{nullptr, 0.1}), std::invalid_argument);
  }

  TEST_CASE("act_team checks the observation count") {
    RngStream rng(4);
    TeamPolicy t(3, 2, 2, {4}, rng);
    JointObservation obs(2, std::vector<double>{0, 0});
    CHECK_THROWS_AS(t.act_team(obs), std::invalid_argument);
    obs.push_back({0, 0});
    CHECK(t.act_team(obs).size() == 3);
  }

  TEST_CASE("flatten and unflatten are inverse") {
    RngStream rng(5);
    TeamPolicy t(2, 4, 2, {6, 3}, rng);
    const auto flat = t.flatten();
    CHECK(flat.size() == t.param_count());
    // Trunk first, then heads in agent order.
    CHECK(std::equal(t.trunk().params.begin(), t.trunk().params.end(), flat.begin()));
    CHECK(std::equal(t.head(1).params.begin(), t.head(1).params.end(),
                     flat.end() - static_cast<std::ptrdiff_t>(t.head(1).params.size())));
    TeamPolicy z = TeamPolicy::zeros(2, 4, 2, {6, 3});
    CHECK(z.same_topology(t));
    z.unflatten(flat);
    CHECK(z == t);
    CHECK_THROWS_AS(z.unflatten(std::vector<double>(3)), std::invalid_argument);
  }

  TEST_CASE("save and load") {
    RngStream rng(6);
    TeamPolicy t(3, 5, 2, {7, 4}, rng);
    std::stringstream ss;
    t.save(ss);
    CHECK(TeamPolicy::load(ss) == t);
  }

  TEST_CASE("batched actor gradient agrees with finite differences") {
    RngStream rng(7);
    TeamPolicy t(2, 3, 2, {5, 4}, rng);
    const Eigen::Index T = 6;
    Eigen::MatrixXd obs(3, T), up(2, T);
    for (Eigen::Index i = 0; i < obs.size(); ++i) obs.data()[i] = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = rng.uniform(-1, 1);
    const std::size_t k = 1;
    ActorTape tape;
    const Eigen::MatrixXd a = actor_forward_batch(t, k, obs, &tape);
    for (Eigen::Index c = 0; c < T; ++c) {
      const auto single = t.act(k, std::vector<double>(obs.col(c).data(), obs.col(c).data() + 3));
      CHECK(single[0] == doctest::Approx(a(0, c)).epsilon(1e-13));
    }
    TeamGradient g(t);
    actor_backward_batch(t, tape, up, g);
    for (double v : g.heads[0]) CHECK(v == 0.0);  // other heads untouched

    auto objective = [&](const ParamVector& flat, const std::vector<double>&) {
      TeamPolicy q = t;
      q.unflatten(flat);
      return (actor_forward_batch(q, k, obs).array() * up.array()).sum();
    };
    ParamVector analytic = g.trunk;
    for (const auto& h : g.heads) analytic.insert(analytic.end(), h.begin(), h.end());
    CHECK(test::max_rel_error_params(objective, t.flatten(), {}, analytic) < 1e-6);
  }
}
