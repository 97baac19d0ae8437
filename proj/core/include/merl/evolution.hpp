#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <vector>

#include "merl/policy.hpp"
#include "merl/rng.hpp"

namespace merl {

struct MutationParams {
  double mut_prob = 0.9;
  double mut_frac = 0.1;
  double mut_strength = 0.1;
  double supermut_prob = 0.05;
  double resetmut_prob = 0.05;
  /// Super mutation sigma = supermut_multiplier * mut_strength.
  double supermut_multiplier = 10.0;
  /// Scale perturbation sigma by |w| (otherwise absolute).
  bool relative = true;
};

struct EvolutionParams {
  std::size_t elites = 4;
  std::size_t tournament_size = 3;
  MutationParams mutation;
};

class Population {
 public:
  Population() = default;
  explicit Population(std::vector<TeamPolicy> teams);

  std::size_t size() const { return teams_.size(); }
  const std::vector<TeamPolicy>& teams() const { return teams_; }
  const TeamPolicy& team(std::size_t i) const { return teams_.at(i); }
  TeamPolicy& team(std::size_t i) { return teams_.at(i); }

  /// Stable identity of the team in slot i; elites keep theirs across generations.
  std::uint64_t id(std::size_t i) const { return ids_.at(i); }
  std::uint64_t generation() const { return generation_; }

  void set_fitness(std::size_t i, double f);
  const std::optional<double>& fitness(std::size_t i) const { return fitness_.at(i); }
  bool all_evaluated() const;
  void clear_fitness();

  /// Replaces slot i with a fresh identity; returns the new id.
  std::uint64_t replace(std::size_t i, TeamPolicy team);
  /// Places team in slot i under an existing identity.
  void assign(std::size_t i, TeamPolicy team, std::uint64_t id);
  void advance_generation() { ++generation_; }

  void save(std::ostream& os) const;
  static Population load(std::istream& is);

 private:
  std::vector<TeamPolicy> teams_;
  std::vector<std::optional<double>> fitness_;
  std::vector<std::uint64_t> ids_;
  std::uint64_t generation_ = 0;
  std::uint64_t next_id_ = 0;
};

/// Indices ordered by fitness, descending; ties go to the lower index.
std::vector<std::size_t> rank(const Population& pop);

/// First e indices of rank(pop).
std::vector<std::size_t> select_elites(const Population& pop, std::size_t e);

/// Winner of a tournament of distinct, uniformly drawn entrants (highest
/// fitness wins, ties to the lower index).
std::size_t tournament_select(const Population& pop, RngStream& rng, std::size_t tournament_size = 3);

/// child = flat(a)[0, cut) ++ flat(b)[cut, end).
TeamPolicy crossover_at(const TeamPolicy& a, const TeamPolicy& b, std::size_t cut);
/// Cut point drawn uniformly from [0, |theta|].
TeamPolicy crossover(const TeamPolicy& a, const TeamPolicy& b, RngStream& rng);

/// Returns the number of weight slots perturbed (0 when the team was not
/// selected for mutation).
std::size_t mutate(TeamPolicy& team, const MutationParams& params, RngStream& rng);

/// Which members of the parent generation contributed to the next one.
struct Lineage {
  std::vector<std::size_t> elites;                                // parent slot indices
  std::vector<std::pair<std::size_t, std::size_t>> parents;       // (elite, tournament) per offspring
  std::set<std::uint64_t> selected_ids;                           // ids of every contributing parent
};

/// Elites copied unchanged into slots [0, e); offspring
/// mutate(crossover(random elite, tournament winner)) fill [e, k).
/// Fitness of the result is cleared.
Population next_generation(const Population& pop, const EvolutionParams& params, RngStream& rng,
                           Lineage* lineage = nullptr);

struct MigrationRecord {
  std::uint64_t generation = 0;
  std::uint64_t migrant_id = 0;
  std::optional<bool> selected;
};

class MigrationLog {
 public:
  void open(std::uint64_t generation, std::uint64_t migrant_id);
  /// Resolves every open record against the ids selected in a selection step.
  void resolve(const std::set<std::uint64_t>& selected_ids);

  const std::vector<MigrationRecord>& records() const { return records_; }
  std::size_t resolved_count() const;

  /// Fraction of resolved migrants that were selected, over the last
  /// `window` resolved records (0 = all). nullopt when there is no data.
  std::optional<double> selection_rate(std::size_t window = 0) const;

  /// Columns: generation,migrant_id,selected
  void write_csv(std::ostream& os) const;

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  std::vector<MigrationRecord> records_;
};

/// Overwrites the weakest member with a deep copy of team and opens a log
/// record. Unevaluated members count as weaker than any evaluated one; ties
/// go to the higher index. Returns the replaced slot.
std::size_t migrate(Population& pop, const TeamPolicy& team, MigrationLog* log = nullptr);

}  // namespace merl
