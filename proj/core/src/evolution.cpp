#include "merl/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "merl/binary_io.hpp"

namespace merl {

Population::Population(std::vector<TeamPolicy> teams)
    : teams_(std::move(teams)), fitness_(teams_.size()), ids_(teams_.size()) {
  for (auto& id : ids_) id = next_id_++;
}

void Population::set_fitness(std::size_t i, double f) {
  if (!std::isfinite(f)) throw std::domain_error("Population::set_fitness: non-finite fitness");
  fitness_.at(i) = f;
}

bool Population::all_evaluated() const {
  return std::all_of(fitness_.begin(), fitness_.end(), [](const auto& f) { return f.has_value(); });
}

void Population::clear_fitness() { std::fill(fitness_.begin(), fitness_.end(), std::nullopt); }

std::uint64_t Population::replace(std::size_t i, TeamPolicy team) {
  teams_.at(i) = std::move(team);
  fitness_[i].reset();
  ids_[i] = next_id_++;
  return ids_[i];
}

void Population::assign(std::size_t i, TeamPolicy team, std::uint64_t id) {
  teams_.at(i) = std::move(team);
  fitness_[i].reset();
  ids_[i] = id;
  next_id_ = std::max(next_id_, id + 1);
}

void Population::save(std::ostream& os) const {
  io::write_string(os, "population");
  io::write_u64(os, teams_.size());
  io::write_u64(os, generation_);
  io::write_u64(os, next_id_);
  for (std::size_t i = 0; i < teams_.size(); ++i) {
    teams_[i].save(os);
    io::write_u64(os, ids_[i]);
    io::write_u64(os, fitness_[i].has_value() ? 1 : 0);
    io::write_f64(os, fitness_[i].value_or(0.0));
  }
}

Population Population::load(std::istream& is) {
  io::expect_tag(is, "population");
  const auto n = io::read_u64(is);
  Population pop;
  pop.generation_ = io::read_u64(is);
  pop.next_id_ = io::read_u64(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    pop.teams_.push_back(TeamPolicy::load(is));
    pop.ids_.push_back(io::read_u64(is));
    const bool has = io::read_u64(is) != 0;
    const double f = io::read_f64(is);
    pop.fitness_.push_back(has ? std::optional<double>(f) : std::nullopt);
  }
  return pop;
}

std::vector<std::size_t> rank(const Population& pop) {
  if (!pop.all_evaluated()) throw std::logic_error("rank: population has unevaluated members");
  std::vector<std::size_t> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return *pop.fitness(a) > *pop.fitness(b); });
  return order;
}

std::vector<std::size_t> select_elites(const Population& pop, std::size_t e) {
  if (e > pop.size()) throw std::invalid_argument("select_elites: more elites than members");
  auto order = rank(pop);
  order.resize(e);
  return order;
}

std::size_t tournament_select(const Population& pop, RngStream& rng, std::size_t tournament_size) {
  if (pop.size() == 0) throw std::invalid_argument("tournament_select: empty population");
  if (tournament_size == 0) throw std::invalid_argument("tournament_select: tournament size must be >= 1");
  const std::size_t entrants = std::min(tournament_size, pop.size());
  std::vector<std::size_t> pool(pop.size());
  std::iota(pool.begin(), pool.end(), 0);
  std::size_t best = pop.size();
  for (std::size_t i = 0; i < entrants; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
    const std::size_t c = pool[i];
    const auto& fc = pop.fitness(c);
    if (!fc) throw std::logic_error("tournament_select: unevaluated entrant");
    if (best == pop.size() || *fc > *pop.fitness(best) || (*fc == *pop.fitness(best) && c < best)) best = c;
  }
  return best;
}

TeamPolicy crossover_at(const TeamPolicy& a, const TeamPolicy& b, std::size_t cut) {
  if (!a.same_topology(b)) throw std::invalid_argument("crossover: parents have different topologies");
  auto child_flat = a.flatten();
  const auto fb = b.flatten();
  if (cut > child_flat.size()) throw std::out_of_range("crossover: cut point beyond parameter count");
  std::copy(fb.begin() + static_cast<std::ptrdiff_t>(cut), fb.end(),
            child_flat.begin() + static_cast<std::ptrdiff_t>(cut));
  TeamPolicy child = a;
  child.unflatten(child_flat);
  return child;
}

TeamPolicy crossover(const TeamPolicy& a, const TeamPolicy& b, RngStream& rng) {
  if (!a.same_topology(b)) throw std::invalid_argument("crossover: parents have different topologies");
  const std::size_t cut = rng.uniform_index(a.param_count() + 1);
  return crossover_at(a, b, cut);
}

std::size_t mutate(TeamPolicy& team, const MutationParams& params, RngStream& rng) {
  if (!rng.bernoulli(params.mut_prob)) return 0;
  auto flat = team.flatten();
  const std::size_t n = flat.size();
  const auto count = std::min(n, static_cast<std::size_t>(std::ceil(params.mut_frac * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
    double& w = flat[idx[i]];
    const double scale = params.relative ? std::abs(w) : 1.0;
    if (rng.bernoulli(params.resetmut_prob)) {
      w = rng.normal();
    } else if (rng.bernoulli(params.supermut_prob)) {
      w += rng.normal(params.supermut_multiplier * params.mut_strength * scale);
    } else {
      w += rng.normal(params.mut_strength * scale);
    }
  }
  team.unflatten(flat);
  return count;
}

Population next_generation(const Population& pop, const EvolutionParams& params, RngStream& rng, Lineage* lineage) {
  const std::size_t k = pop.size();
  const std::size_t e = params.elites;
  if (e > k) throw std::invalid_argument("next_generation: elites exceed population size");
  if (e == 0 && k > 0) throw std::invalid_argument("next_generation: at least one elite is required");
  const auto elites = select_elites(pop, e);
  Lineage local;
  Lineage& lin = lineage ? *lineage : local;
  lin = Lineage{};
  lin.elites = elites;

  Population out = pop;
  for (std::size_t i = 0; i < e; ++i) {
    out.assign(i, pop.team(elites[i]), pop.id(elites[i]));
    lin.selected_ids.insert(pop.id(elites[i]));
  }
  for (std::size_t slot = e; slot < k; ++slot) {
    const std::size_t elite = elites[rng.uniform_index(e)];
    const std::size_t other = tournament_select(pop, rng, params.tournament_size);
    lin.parents.emplace_back(elite, other);
    lin.selected_ids.insert(pop.id(other));
    TeamPolicy child = crossover(pop.team(elite), pop.team(other), rng);
    mutate(child, params.mutation, rng);
    out.replace(slot, std::move(child));
  }
  out.clear_fitness();
  out.advance_generation();
  return out;
}

void MigrationLog::open(std::uint64_t generation, std::uint64_t migrant_id) {
  records_.push_back({generation, migrant_id, std::nullopt});
}

void MigrationLog::resolve(const std::set<std::uint64_t>& selected_ids) {
  for (auto& r : records_) {
    if (!r.selected) r.selected = selected_ids.contains(r.migrant_id);
  }
}

std::size_t MigrationLog::resolved_count() const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [](const auto& r) { return r.selected.has_value(); }));
}

std::optional<double> MigrationLog::selection_rate(std::size_t window) const {
  std::size_t seen = 0, hits = 0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (!it->selected) continue;
    ++seen;
    hits += *it->selected ? 1 : 0;
    if (window != 0 && seen == window) break;
  }
  if (seen == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(seen);
}

void MigrationLog::write_csv(std::ostream& os) const {
  os << "generation,migrant_id,selected\n";
  for (const auto& r : records_) {
    if (!r.selected) continue;
    os << r.generation << ',' << r.migrant_id << ',' << (*r.selected ? 1 : 0) << '\n';
  }
}

void MigrationLog::save(std::ostream& os) const {
  io::write_u64(os, records_.size());
  for (const auto& r : records_) {
    io::write_u64(os, r.generation);
    io::write_u64(os, r.migrant_id);
    io::write_u64(os, r.selected ? (*r.selected ? 2 : 1) : 0);
  }
}

void MigrationLog::load(std::istream& is) {
  records_.resize(io::read_u64(is));
  for (auto& r : records_) {
    r.generation = io::read_u64(is);
    r.migrant_id = io::read_u64(is);
    const auto s = io::read_u64(is);
    r.selected = s == 0 ? std::nullopt : std::optional<bool>(s == 2);
  }
}

std::size_t migrate(Population& pop, const TeamPolicy& team, MigrationLog* log) {
  if (pop.size() == 0) throw std::invalid_argument("migrate: empty population");
  std::optional<std::size_t> weakest;
  for (std::size_t i = pop.size(); i-- > 0;) {
    if (!pop.fitness(i)) {
      weakest = i;
      break;
    }
  }
  if (!weakest) {
    weakest = pop.size() - 1;
    for (std::size_t i = pop.size(); i-- > 0;) {
      if (*pop.fitness(i) < *pop.fitness(*weakest)) weakest = i;
    }
  }
  const auto id = pop.replace(*weakest, team);
  if (log) log->open(pop.generation(), id);
  return *weakest;
}

}  // namespace merl
