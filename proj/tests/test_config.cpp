#include <doctest.h>

#include "merl/config.hpp"

using namespace merl;

namespace {

ResolvedConfig resolve_text(const std::string& text) { return resolve_config(parse_config_text(text)); }

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("rover defaults") {
    const auto r = resolve_text("task = rover\ncoupling = 3\n");
    const auto& c = r.config;
    CHECK(c.env.task == env::Task::Rover);
    CHECK(c.env.coupling == 3);
    CHECK(c.env.num_agents == 6);  // two rovers per coupling unit unless set
    CHECK(c.env.num_pois == 4);
    CHECK(c.env.episode_length == 70);
    CHECK(c.rollout_size == 50);
    CHECK(c.td3.tau == 1e-5);
    CHECK(c.td3.batch_size == 512);
    CHECK(c.learn_start == 512);
    CHECK(r.provenance.at("coupling") == Source::File);
    CHECK(r.provenance.at("agents") == Source::Default);
    CHECK(resolve_text("task = rover\ncoupling = 3\nagents = 4\n").config.env.num_agents == 4);
  }

  TEST_CASE("algorithm presets") {
    CHECK(resolve_text("algo = maddpg\n").config.td3.twin == false);
    CHECK(resolve_text("algo = maddpg\n").config.td3.policy_freq == 1);
    CHECK(resolve_text("algo = matd3\n").config.td3.twin == true);
    CHECK(resolve_text("algo = mixed\n").config.reward_mode == RewardMode::Mixed);
    CHECK(is_population_algo(Algorithm::Ea));
    CHECK_FALSE(is_population_algo(Algorithm::Matd3));
    CHECK_THROWS_AS(parse_algorithm("ppo"), std::invalid_argument);
  }

  TEST_CASE("keys that do not apply to the task are rejected") {
    try {
      resolve_text("task = coop_nav\ncoupling = 2\n");
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("coupling") != std::string::npos);
    }
    CHECK_THROWS_AS(resolve_text("task = rover\nprey_speed = 2\n"), std::invalid_argument);
    CHECK(key_applies("landmarks", env::Task::PredatorPrey));
    CHECK_FALSE(key_applies("landmarks", env::Task::Rover));
  }

  TEST_CASE("malformed input names the key") {
    CHECK_THROWS_AS(parse_config_text("bogus_key = 1\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("no equals sign\n"), std::invalid_argument);
    for (const char* bad : {"pop_size = 0\n", "elites = 20\n", "mut_prob = 1.5\n", "gamma = 2\n",
                            "actor_hidden = 10,x\n", "frames = -5\n"}) {
      CAPTURE(bad);
      CHECK_THROWS(resolve_text(bad));
    }
    try {
      resolve_text("tau = 3\n");
      FAIL("expected an error");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).rfind("tau", 0) == 0);
    }
  }

  TEST_CASE("comments, blank lines and later entries win") {
    const auto r = resolve_text("# header\n\nseed = 1  # trailing\nseed = 7\n");
    CHECK(r.config.seed == 7);
    Overrides o = parse_config_text("seed = 3\n");
    o.add("seed", "9", Source::Flag);
    const auto f = resolve_config(o);
    CHECK(f.config.seed == 9);
    CHECK(f.provenance.at("seed") == Source::Flag);
  }

  TEST_CASE("dump round trips through the parser") {
    for (const char* text : {"task = rover\ncoupling = 4\nfuel = 1,2,3,4,5,6,7,8\n",
                             "task = predator_prey\nalgo = maddpg\nprey_speed = 2.0\n",
                             "task = coop_nav\nmixed_weight = 0.1\nagent_positions = 0,0;1,1;0.5,-0.25\n"}) {
      CAPTURE(text);
      const auto a = resolve_text(text).config;
      const auto dumped = dump_config(a);
      const auto b = resolve_text(dumped).config;
      CHECK(dump_config(b) == dumped);
    }
  }

  TEST_CASE("lockfile lists every applicable key with its source") {
    const auto r = resolve_text("task = rover\nseed = 5\n");
    const auto lock = r.lockfile();
    CHECK(lock.find("seed = 5  # file") != std::string::npos);
    CHECK(lock.find("gamma = ") != std::string::npos);
    CHECK(lock.find("# default") != std::string::npos);
    CHECK(lock.find("prey_speed") == std::string::npos);
    for (const auto& key : config_keys()) {
      if (key_applies(key, env::Task::Rover)) CHECK(lock.find(key + " = ") != std::string::npos);
    }
  }

  TEST_CASE("config_value formats values the parser accepts") {
    auto c = default_config(env::Task::CoopNav, Algorithm::Merl);
    c.actor_hidden = {32, 16};
    CHECK(config_value(c, "actor_hidden") == "32,16");
    CHECK(config_value(c, "algo") == "merl");
    CHECK_THROWS(config_value(c, "nope"));
  }
}
