#include <doctest.h>

#include <cmath>
#include <numbers>

#include "merl/envs.hpp"

using namespace merl;
using namespace merl::env;

namespace {

EnvConfig rover_cfg(std::size_t agents, std::size_t pois, std::size_t coupling) {
  EnvConfig c;
  c.task = Task::Rover;
  c.num_agents = agents;
  c.num_pois = pois;
  c.coupling = coupling;
  c.world_size = 10.0;
  return c;
}

}  // namespace

TEST_SUITE("envs") {
  TEST_CASE("integrator matches a hand recursion") {
    BodyDynamics dyn{0.5, kInf};
    Vec2 p{0.1, -0.2}, v{0, 0};
    double px = 0.1, py = -0.2, vx = 0, vy = 0;
    const Vec2 accel[5] = {{1, 0}, {1, 1}, {-0.5, 0.25}, {0, -1}, {0.3, 0.3}};
    for (const auto& a : accel) {
      integrate_body(p, v, a, dyn, 0.75, 0.1);
      vx = 0.75 * vx + 0.5 * a.x;
      vy = 0.75 * vy + 0.5 * a.y;
      px += 0.1 * vx;
      py += 0.1 * vy;
    }
    CHECK(std::abs(p.x - px) < 1e-12);
    CHECK(std::abs(p.y - py) < 1e-12);
    CHECK(std::abs(v.x - vx) < 1e-12);
  }

  TEST_CASE("speed clamp and fuel limit") {
    BodyDynamics dyn{10.0, 1.0};
    Vec2 p{0, 0}, v{0, 0};
    integrate_body(p, v, {1, 1}, dyn, 0.5, 0.1);
    CHECK(v.norm() == doctest::Approx(1.0));
    Vec2 q{0, 0}, w{0, 0};
    const double moved = integrate_body(q, w, {1, 0}, dyn, 0.5, 0.1, 0.03);
    CHECK(moved == doctest::Approx(0.03));
    CHECK(q.x == doctest::Approx(0.03));
    CHECK(integrate_body(q, w, {1, 0}, dyn, 0.5, 0.1, 0.0) == 0.0);
    CHECK(w == Vec2{});
  }

  TEST_CASE("coop-nav local reward against brute force") {
    EnvConfig c;
    c.num_agents = 3;
    c.num_pois = 3;
    RngStream rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      auto s = reset(c, rng);
      double expect = 0;
      for (const auto& poi : s.pois) {
        double best = 1e300;
        for (const auto& a : s.pos) best = std::min(best, std::hypot(a.x - poi.x, a.y - poi.y));
        expect -= best;
      }
      std::size_t hits = 0;
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = i + 1; j < 3; ++j) hits += distance(s.pos[i], s.pos[j]) < 0.3;
      }
      expect -= static_cast<double>(hits);
      CHECK(coop_nav_rewards(s, c).local == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("coop-nav reward is zero exactly when every POI is covered") {
    EnvConfig c;
    c.num_agents = 2;
    c.num_pois = 2;
    c.agent_positions = {{0, 0}, {1, 1}};
    c.poi_positions = {{0, 0}, {1, 1}};
    RngStream rng(2);
    auto s = reset(c, rng);
    CHECK(coop_nav_rewards(s, c).local == 0.0);
    s.pos[1] = {1, 0.9};
    CHECK(coop_nav_rewards(s, c).local < 0.0);
    s.pos[1] = {0.1, 0};  // collision
    const auto r = coop_nav_rewards(s, c);
    CHECK(r.collisions == 1);
  }

  TEST_CASE("coop-nav team reward is the running mean of the local reward") {
    EnvConfig c;
    c.episode_length = 4;
    Environment e(c);
    RngStream rng(3);
    e.reset(rng);
    double sum = 0;
    StepResult r;
    for (int t = 0; t < 4; ++t) {
      r = e.step(JointAction(3, std::vector<double>{0.3, -0.2}));
      sum += r.local[0];
      CHECK(r.global == doctest::Approx(sum / (t + 1)));
    }
    CHECK(r.done);
  }

  TEST_CASE("rover bins, inverse distance and occlusion") {
    auto c = rover_cfg(2, 2, 1);
    c.agent_positions = {{0, 0}, {0, 3}};
    c.poi_positions = {{2, 0.1}, {4, 0.2}};  // both in the first bracket; the nearer wins
    RngStream rng(4);
    auto s = reset(c, rng);
    const auto o = rover_observe(s, 0, c);
    REQUIRE(o.size() == 72);
    CHECK(o[0] == doctest::Approx(1.0 / std::hypot(2, 0.1)));
    CHECK(o[kRoverBins + 9] == doctest::Approx(1.0 / 3.0));  // rover due north: bin 9
    double rest = 0;
    for (std::size_t i = 0; i < o.size(); ++i) {
      if (i != 0 && i != kRoverBins + 9) rest += std::abs(o[i]);
    }
    CHECK(rest == 0.0);

    s.pois[0] = {0.01, 0};
    CHECK(rover_observe(s, 0, c)[0] == doctest::Approx(1.0 / c.d_floor));
    c.sensor_range = 1.0;
    s.pois[0] = {2, 0.1};
    CHECK(rover_observe(s, 0, c)[0] == 0.0);
  }

  TEST_CASE("rover bin edges go counter-clockwise from east") {
    auto c = rover_cfg(1, 1, 1);
    RngStream rng(5);
    auto s = reset(c, rng);
    s.pos[0] = {0, 0};
    for (int deg : {5, 95, 185, 275, 355}) {
      const double r = deg * std::numbers::pi / 180.0;
      s.pois[0] = {std::cos(r), std::sin(r)};
      const auto o = rover_observe(s, 0, c);
      CHECK(o[static_cast<std::size_t>(deg / 10)] == doctest::Approx(1.0));
    }
  }

  TEST_CASE("coupling gates observation") {
    auto c = rover_cfg(3, 1, 2);
    c.poi_positions = {{0, 0}};
    c.agent_positions = {{0.1, 0}, {5, 5}, {-5, -5}};
    RngStream rng(6);
    auto s = reset(c, rng);
    CHECK(rover_rewards(s, c).global == 0.0);
    s.pos[1] = {0, 0.2};
    const auto r = rover_rewards(s, c);
    CHECK(r.global == 1.0);
    CHECK(r.local[2] == doctest::Approx(-std::hypot(5, 5)));
    // Latched: leaving does not undo the observation.
    s.pos[0] = s.pos[1] = {5, 5};
    CHECK(rover_rewards(s, c).global == 1.0);
  }

  TEST_CASE("rover team reward never decreases within an episode") {
    auto c = rover_cfg(4, 4, 2);
    c.world_size = 2.0;
    Environment e(c);
    RngStream rng(7);
    for (int ep = 0; ep < 20; ++ep) {
      e.reset(rng);
      double last = 0;
      for (std::size_t t = 0; t < c.episode_length; ++t) {
        JointAction a;
        for (std::size_t k = 0; k < 4; ++k) a.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        const auto r = e.step(a);
        CHECK(r.global >= last);
        CHECK(r.global <= 1.0);
        last = r.global;
      }
    }
  }

  TEST_CASE("rover fuel caps distance travelled") {
    auto c = rover_cfg(2, 1, 1);
    c.fuel = {0.05, 100.0};
    Environment e(c);
    RngStream rng(8);
    e.reset(rng);
    for (int t = 0; t < 30; ++t) e.step(JointAction(2, std::vector<double>{1, 1}));
    CHECK(e.state().distance_travelled[0] == doctest::Approx(0.05));
    CHECK(e.state().distance_travelled[1] > 1.0);
  }

  TEST_CASE("predator-prey touches accumulate") {
    EnvConfig c;
    c.task = Task::PredatorPrey;
    c.num_agents = 3;
    c.num_pois = 2;
    c.agent_radius = 0.075;
    c.agent_positions = {{0, 0}, {0.1, 0}, {3, 3}};
    c.prey_position = Vec2{0.05, 0};
    RngStream rng(9);
    auto s = reset(c, rng);
    const auto r = predator_prey_rewards(s, c);
    CHECK(r.touches == 2);
    CHECK(r.prey_reward == -2.0);
    CHECK(r.touching == std::vector<bool>{true, true, false});
    CHECK(predator_prey_rewards(s, c).global == 4.0);
    CHECK(observe(s, 0, c).size() == c.obs_dim());
    CHECK(observe_prey(s, c).size() == c.prey_obs_dim());
  }

  TEST_CASE("predator-prey step needs a prey action") {
    EnvConfig c;
    c.task = Task::PredatorPrey;
    Environment e(c);
    RngStream rng(10);
    e.reset(rng);
    const JointAction a(3, std::vector<double>{0, 0});
    CHECK_THROWS_AS(e.step(a), std::invalid_argument);
    const std::vector<double> prey{1, 0};
    const auto r = e.step(a, &prey);
    CHECK(r.prey_next_obs.size() == c.prey_obs_dim());
  }

  TEST_CASE("observation layout for coop-nav") {
    EnvConfig c;
    c.num_agents = 2;
    c.num_pois = 1;
    c.agent_positions = {{1, 2}, {4, 6}};
    c.poi_positions = {{0, 0}};
    RngStream rng(11);
    const auto s = reset(c, rng);
    CHECK(observe(s, 0, c) == std::vector<double>{0, 0, 1, 2, -1, -2, 3, 4});
  }

  TEST_CASE("same seed, same trajectory") {
    EnvConfig c;
    Environment a(c), b(c);
    RngStream ra(12), rb(12);
    a.reset(ra);
    b.reset(rb);
    RngStream act(1);
    for (int t = 0; t < 25; ++t) {
      JointAction j;
      for (int k = 0; k < 3; ++k) j.push_back({act.uniform(-1, 1), act.uniform(-1, 1)});
      a.step(j);
      b.step(j);
    }
    CHECK(a.state() == b.state());
  }

  TEST_CASE("bad actions and configs are rejected") {
    EnvConfig c;
    Environment e(c);
    RngStream rng(13);
    CHECK_THROWS_AS(e.step(JointAction(3, std::vector<double>{0, 0})), std::logic_error);
    e.reset(rng);
    CHECK_THROWS_AS(e.step(JointAction(2, std::vector<double>{0, 0})), std::invalid_argument);
    CHECK_THROWS_AS(e.step(JointAction(3, std::vector<double>{NAN, 0})), std::domain_error);
    auto r = rover_cfg(2, 2, 9);
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    CHECK_THROWS_AS(parse_task("soccer"), std::invalid_argument);
  }
}
