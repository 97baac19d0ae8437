#include <doctest.h>

#include <sstream>

#include "merl/evolution.hpp"

using namespace merl;

namespace {

Population make_pop(std::size_t k, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<TeamPolicy> teams;
  for (std::size_t i = 0; i < k; ++i) teams.push_back(TeamPolicy(2, 3, 2, {4}, rng));
  return Population(std::move(teams));
}

void set_all(Population& p, const std::vector<double>& f) {
  for (std::size_t i = 0; i < f.size(); ++i) p.set_fitness(i, f[i]);
}

}  // namespace

TEST_SUITE("evolution") {
  TEST_CASE("rank is descending with ties to the lower index") {
    auto p = make_pop(5, 1);
    set_all(p, {1.0, 3.0, 3.0, -1.0, 2.0});
    CHECK(rank(p) == std::vector<std::size_t>{1, 2, 4, 0, 3});
    CHECK(select_elites(p, 2) == std::vector<std::size_t>{1, 2});
    p.clear_fitness();
    CHECK_FALSE(p.all_evaluated());
    CHECK_THROWS(rank(p));
  }

  TEST_CASE("tournament win frequencies match the combinatorial oracle") {
    // With 10 members and 3 distinct entrants, the best loses only when it is
    // absent: P(best wins) = 1 - C(9,3)/C(10,3) = 0.3. The second best wins
    // when it is present and the best is not: C(8,2)/C(10,3) = 28/120.
    auto p = make_pop(10, 2);
    set_all(p, {0, 1, 2, 3, 4, 5, 6, 7, 9, 8});
    RngStream rng(3);
    const int n = 100000;
    int best = 0, second = 0;
    for (int i = 0; i < n; ++i) {
      const auto w = tournament_select(p, rng, 3);
      best += w == 8;
      second += w == 9;
    }
    CHECK(static_cast<double>(best) / n == doctest::Approx(0.3).epsilon(0.02));
    CHECK(static_cast<double>(second) / n == doctest::Approx(28.0 / 120.0).epsilon(0.02));
    CHECK(tournament_select(p, rng, 11) == 8);  // capped at the population size
    CHECK_THROWS(tournament_select(p, rng, 0));
  }

  TEST_CASE("crossover splices flattened parameters") {
    auto p = make_pop(2, 4);
    const auto a = p.team(0).flatten(), b = p.team(1).flatten();
    for (std::size_t cut : {std::size_t{0}, std::size_t{7}, a.size()}) {
      const auto c = crossover_at(p.team(0), p.team(1), cut).flatten();
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == (i < cut ? a[i] : b[i]));
    }
    CHECK_THROWS(crossover_at(p.team(0), p.team(1), a.size() + 1));
    RngStream rng(1);
    TeamPolicy other(3, 3, 2, {4}, rng);
    CHECK_THROWS(crossover_at(p.team(0), other, 1));
  }

  TEST_CASE("mutation perturbs the configured fraction") {
    auto p = make_pop(1, 5);
    MutationParams m;
    m.mut_prob = 1.0;
    m.mut_frac = 0.1;
    m.relative = false;
    RngStream rng(6);
    const auto before = p.team(0).flatten();
    TeamPolicy t = p.team(0);
    const auto count = mutate(t, m, rng);
    const auto after = t.flatten();
    CHECK(count == static_cast<std::size_t>(std::ceil(0.1 * before.size())));
    std::size_t changed = 0;
    for (std::size_t i = 0; i < before.size(); ++i) changed += before[i] != after[i];
    CHECK(changed == count);

    m.mut_prob = 0.0;
    TeamPolicy u = p.team(0);
    CHECK(mutate(u, m, rng) == 0);
    CHECK(u == p.team(0));
  }

  TEST_CASE("relative mutation leaves zero weights alone") {
    TeamPolicy z = TeamPolicy::zeros(1, 3, 2, {4});
    MutationParams m;
    m.mut_prob = 1.0;
    m.mut_frac = 1.0;
    m.resetmut_prob = 0.0;
    m.relative = true;
    RngStream rng(7);
    CHECK(mutate(z, m, rng) == z.param_count());
    CHECK(z == TeamPolicy::zeros(1, 3, 2, {4}));
  }

  TEST_CASE("elites survive unchanged and keep their ids") {
    auto p = make_pop(8, 8);
    set_all(p, {5, 1, 7, 0, 3, 2, 6, 4});
    EvolutionParams ep;
    ep.elites = 3;
    RngStream rng(9);
    Lineage lin;
    const auto next = next_generation(p, ep, rng, &lin);
    CHECK(next.size() == 8);
    CHECK(lin.elites == std::vector<std::size_t>{2, 6, 0});
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(next.team(i) == p.team(lin.elites[i]));
      CHECK(next.id(i) == p.id(lin.elites[i]));
    }
    CHECK(lin.parents.size() == 5);
    for (auto [e, t] : lin.parents) {
      CHECK(std::find(lin.elites.begin(), lin.elites.end(), e) != lin.elites.end());
      CHECK(lin.selected_ids.count(p.id(t)) == 1);
    }
    for (std::size_t i = 3; i < 8; ++i) {
      CHECK_FALSE(next.fitness(i).has_value());
      CHECK(lin.selected_ids.count(next.id(i)) == 0);  // offspring get fresh ids
    }
    ep.elites = 0;
    CHECK_THROWS(next_generation(p, ep, rng));
  }

  TEST_CASE("migration replaces the weakest member") {
    auto p = make_pop(4, 10);
    RngStream rng(1);
    TeamPolicy pg(2, 3, 2, {4}, rng);
    set_all(p, {2, -1, 3, -1});
    MigrationLog log;
    const auto slot = migrate(p, pg, &log);
    CHECK(slot == 3);  // ties go to the higher index
    CHECK(p.team(3) == pg);
    CHECK_FALSE(p.fitness(3).has_value());
    REQUIRE(log.records().size() == 1);
    CHECK(log.records()[0].migrant_id == p.id(3));

    // An unevaluated slot is weaker than any evaluated one.
    auto q = make_pop(4, 11);
    q.set_fitness(0, -100);
    q.set_fitness(2, -200);
    CHECK(migrate(q, pg) == 3);
  }

  TEST_CASE("migration log selection rate") {
    MigrationLog log;
    CHECK_FALSE(log.selection_rate().has_value());
    log.open(0, 10);
    log.resolve({10, 3});
    log.open(1, 11);
    log.resolve({4});
    log.open(2, 12);
    CHECK(log.resolved_count() == 2);
    CHECK(*log.selection_rate() == 0.5);
    CHECK(*log.selection_rate(1) == 0.0);
    log.resolve({12});
    CHECK(*log.selection_rate() == doctest::Approx(2.0 / 3.0));
    std::ostringstream os;
    log.write_csv(os);
    CHECK(os.str() == "generation,migrant_id,selected\n0,10,1\n1,11,0\n2,12,1\n");
    std::stringstream ss;
    log.save(ss);
    MigrationLog back;
    back.load(ss);
    CHECK(back.records().size() == 3);
    CHECK(*back.selection_rate() == *log.selection_rate());
  }

  TEST_CASE("population save and load") {
    auto p = make_pop(3, 12);
    p.set_fitness(1, 0.25);
    p.advance_generation();
    std::stringstream ss;
    p.save(ss);
    const auto back = Population::load(ss);
    CHECK(back.generation() == 1);
    CHECK(back.fitness(1) == 0.25);
    CHECK_FALSE(back.fitness(0).has_value());
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back.team(i) == p.team(i));
      CHECK(back.id(i) == p.id(i));
    }
  }
}
