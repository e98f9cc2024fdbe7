#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nmod/grn.hpp"
#include "nmod/rng.hpp"

namespace nmod::evo {

struct EvolutionConfig {
  int population_size = 50;
  int generations = 50;
  // random genomes sit ~5 apart under genome_distance; 3.0 keeps species
  // large enough for real tournaments instead of fragmenting into singletons
  double speciation_threshold = 3.0;
  int tournament_size = 3;
  int elite_count = 1;
  double p_crossover = 0.7;
  double p_add_protein = 0.1;
  double p_remove_protein = 0.05;
  double p_mutate_tag = 1.0;
  double p_mutate_dynamics = 0.05;
  int initial_regulators = 1;
  double tag_mutation_sigma = 0.15;
  std::uint64_t rng_seed = 0;

  // controller interface evolved genomes must expose
  int n_inputs = 1;
  int n_outputs = 1;

  // carries the beta/delta bounds used by initialization and mutation
  grn::GrnConfig grn;
};

// configuration problems as human-readable messages; empty means usable
std::vector<std::string> validate_config(const EvolutionConfig& config);

struct Individual {
  grn::Genome genome;
  std::optional<double> fitness;
  std::optional<int> species_id;
};

struct Species {
  int id = 0;
  grn::Genome representative;
  std::vector<int> members;  // indices into the population
};

// what a fitness function may condition on, beyond the genome itself
struct GenerationContext {
  int generation = 0;
  int model_id = 0;
  std::uint64_t init_seed = 0;
};

struct GenerationStats {
  int generation = 0;
  double best = 0.0;
  double mean = 0.0;
  int species_count = 0;
  int model_id = 0;
  std::uint64_t seed = 0;
};

using EvolutionHistory = std::vector<GenerationStats>;

struct EvolveResult {
  Individual best;  // best-ever across all generations
  EvolutionHistory history;
};

using FitnessFn = std::function<double(const grn::Genome&, const GenerationContext&)>;
using ContextFn = std::function<GenerationContext(int generation)>;

grn::Genome random_genome(int n_inputs, int n_outputs, const EvolutionConfig& config, Rng& rng);

double protein_distance(const grn::Protein& a, const grn::Protein& b);

// alignment-based distance over output+regulator proteins plus dynamics terms;
// throws std::invalid_argument when input/output counts differ
double genome_distance(const grn::Genome& a, const grn::Genome& b);

// assigns each individual to the first species whose representative lies within
// threshold, creating new species as needed; representatives are refreshed to a
// random member and empty species dropped
std::vector<Species> speciate(const std::vector<Individual>& population, double threshold,
                              const std::vector<Species>& previous_species, Rng& rng);

// `fitter` contributes its unaligned regulators; aligned pairs and the
// input/output slots pick a parent uniformly
grn::Genome crossover(const grn::Genome& fitter, const grn::Genome& other, Rng& rng);

grn::Genome mutate(const grn::Genome& genome, const EvolutionConfig& config, Rng& rng);

std::vector<Individual> next_generation(const std::vector<Individual>& population,
                                        const std::vector<Species>& species,
                                        const EvolutionConfig& config, Rng& rng);

// runs the configured number of generations; fitness evaluations may be spread
// over n_workers threads (results are identical for any worker count); a null
// context_fn yields contexts with model_id 0 and a seed derived per generation
EvolveResult evolve(const FitnessFn& fitness_fn, const EvolutionConfig& config,
                    const ContextFn& context_fn = nullptr, int n_workers = 1);

}  // namespace nmod::evo
