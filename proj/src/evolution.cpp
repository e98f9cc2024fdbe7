#include "nmod/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>
#include <utility>

namespace nmod::evo {

namespace {

using grn::Genome;
using grn::Protein;
using grn::ProteinKind;

void check_probability(std::vector<std::string>& out, double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0))
    out.push_back(std::string(name) + " must lie in [0, 1]");
}

struct Alignment {
  std::vector<std::pair<int, int>> pairs;  // (index into a, index into b)
  std::vector<int> unmatched_a;
  std::vector<int> unmatched_b;
  double total = 0.0;
};

// globally greedy min-distance matching; ties resolve to the smallest (i, j)
Alignment align(const std::vector<Protein>& a, const std::vector<Protein>& b) {
  Alignment out;
  const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
  std::vector<char> used_a(na, 0), used_b(nb, 0);
  const int rounds = std::min(na, nb);
  for (int r = 0; r < rounds; ++r) {
    double best = -1.0;
    int bi = -1, bj = -1;
    for (int i = 0; i < na; ++i) {
      if (used_a[i]) continue;
      for (int j = 0; j < nb; ++j) {
        if (used_b[j]) continue;
        const double d = protein_distance(a[i], b[j]);
        if (bi < 0 || d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    used_a[bi] = used_b[bj] = 1;
    out.pairs.emplace_back(bi, bj);
    out.total += best;
  }
  for (int i = 0; i < na; ++i)
    if (!used_a[i]) out.unmatched_a.push_back(i);
  for (int j = 0; j < nb; ++j)
    if (!used_b[j]) out.unmatched_b.push_back(j);
  return out;
}

std::vector<Protein> slice(const Genome& g, ProteinKind kind) {
  std::vector<Protein> out;
  for (const auto& p : g.proteins)
    if (p.kind == kind) out.push_back(p);
  return out;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

std::vector<std::string> validate_config(const EvolutionConfig& c) {
  std::vector<std::string> out;
  if (c.population_size < 1) out.push_back("population_size must be >= 1");
  if (c.generations < 1) out.push_back("generations must be >= 1");
  if (!(c.speciation_threshold > 0.0)) out.push_back("speciation_threshold must be > 0");
  if (c.tournament_size < 1) out.push_back("tournament_size must be >= 1");
  if (c.elite_count < 0 || c.elite_count >= c.population_size)
    out.push_back("elite_count must lie in [0, population_size)");
  check_probability(out, c.p_crossover, "p_crossover");
  check_probability(out, c.p_add_protein, "p_add_protein");
  check_probability(out, c.p_remove_protein, "p_remove_protein");
  check_probability(out, c.p_mutate_tag, "p_mutate_tag");
  check_probability(out, c.p_mutate_dynamics, "p_mutate_dynamics");
  if (c.initial_regulators < 0) out.push_back("initial_regulators must be >= 0");
  if (!(c.tag_mutation_sigma > 0.0)) out.push_back("tag_mutation_sigma must be > 0");
  if (c.n_inputs < 1) out.push_back("n_inputs must be >= 1");
  if (c.n_outputs < 1) out.push_back("n_outputs must be >= 1");
  return out;
}

Genome random_genome(int n_inputs, int n_outputs, const EvolutionConfig& config, Rng& rng) {
  if (n_inputs < 1 || n_outputs < 1)
    throw std::invalid_argument("random_genome requires at least one input and one output");
  auto draw = [&rng] {
    Protein p;
    p.id = rng.uniform();
    p.enh = rng.uniform();
    p.inh = rng.uniform();
    return p;
  };
  std::vector<Protein> in, out, reg;
  for (int i = 0; i < n_inputs; ++i) in.push_back(draw());
  for (int i = 0; i < n_outputs; ++i) out.push_back(draw());
  for (int i = 0; i < config.initial_regulators; ++i) reg.push_back(draw());
  const double beta = rng.uniform(config.grn.beta_min, config.grn.beta_max);
  const double delta = rng.uniform(config.grn.delta_min, config.grn.delta_max);
  return Genome::make(in, out, reg, beta, delta);
}

double protein_distance(const Protein& a, const Protein& b) {
  return std::fabs(a.id - b.id) + std::fabs(a.enh - b.enh) + std::fabs(a.inh - b.inh);
}

double genome_distance(const Genome& a, const Genome& b) {
  if (a.n_inputs() != b.n_inputs() || a.n_outputs() != b.n_outputs())
    throw std::invalid_argument("genome_distance requires equal input/output counts");
  std::vector<Protein> pool_a, pool_b;
  for (const auto& p : a.proteins)
    if (p.kind != ProteinKind::Input) pool_a.push_back(p);
  for (const auto& p : b.proteins)
    if (p.kind != ProteinKind::Input) pool_b.push_back(p);
  const Alignment al = align(pool_a, pool_b);
  const double unmatched =
      static_cast<double>(al.unmatched_a.size() + al.unmatched_b.size());
  return al.total + std::fabs(a.beta - b.beta) + std::fabs(a.delta - b.delta) + unmatched;
}

std::vector<Species> speciate(const std::vector<Individual>& population, double threshold,
                              const std::vector<Species>& previous_species, Rng& rng) {
  if (!(threshold > 0.0)) throw std::invalid_argument("speciation threshold must be > 0");
  std::vector<Species> species;
  int next_id = 0;
  for (const auto& prev : previous_species) {
    species.push_back(Species{prev.id, prev.representative, {}});
    next_id = std::max(next_id, prev.id + 1);
  }
  for (int i = 0; i < static_cast<int>(population.size()); ++i) {
    bool placed = false;
    for (auto& sp : species) {
      if (genome_distance(population[i].genome, sp.representative) < threshold) {
        sp.members.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed)
      species.push_back(Species{next_id++, population[i].genome, {i}});
  }
  std::vector<Species> alive;
  for (auto& sp : species)
    if (!sp.members.empty()) alive.push_back(std::move(sp));
  for (auto& sp : alive) {
    const int pick = rng.uniform_int(static_cast<int>(sp.members.size()));
    sp.representative = population[sp.members[pick]].genome;
  }
  return alive;
}

Genome crossover(const Genome& fitter, const Genome& other, Rng& rng) {
  if (fitter.n_inputs() != other.n_inputs() || fitter.n_outputs() != other.n_outputs())
    throw std::invalid_argument("crossover requires equal input/output counts");
  auto pick = [&rng](const Protein& x, const Protein& y) {
    return rng.uniform() < 0.5 ? x : y;
  };
  const auto in_a = slice(fitter, ProteinKind::Input), in_b = slice(other, ProteinKind::Input);
  const auto out_a = slice(fitter, ProteinKind::Output), out_b = slice(other, ProteinKind::Output);
  const auto reg_a = slice(fitter, ProteinKind::Regulator),
             reg_b = slice(other, ProteinKind::Regulator);

  std::vector<Protein> in, out, reg;
  for (size_t i = 0; i < in_a.size(); ++i) in.push_back(pick(in_a[i], in_b[i]));
  for (size_t i = 0; i < out_a.size(); ++i) out.push_back(pick(out_a[i], out_b[i]));

  const Alignment al = align(reg_a, reg_b);
  // child regulators follow the fitter parent's ordering
  std::vector<int> partner(reg_a.size(), -1);
  for (const auto& [i, j] : al.pairs) partner[i] = j;
  for (size_t i = 0; i < reg_a.size(); ++i)
    reg.push_back(partner[i] >= 0 ? pick(reg_a[i], reg_b[partner[i]]) : reg_a[i]);

  const double beta = rng.uniform() < 0.5 ? fitter.beta : other.beta;
  const double delta = rng.uniform() < 0.5 ? fitter.delta : other.delta;
  return Genome::make(in, out, reg, beta, delta);
}

Genome mutate(const Genome& genome, const EvolutionConfig& config, Rng& rng) {
  Genome m = genome;
  if (rng.uniform() < config.p_add_protein) {
    Protein p;
    p.id = rng.uniform();
    p.enh = rng.uniform();
    p.inh = rng.uniform();
    p.kind = ProteinKind::Regulator;
    m.proteins.push_back(p);
  }
  if (rng.uniform() < config.p_remove_protein && m.n_regulators() > 0) {
    const int r = rng.uniform_int(m.n_regulators());
    m.proteins.erase(m.proteins.begin() + m.n_inputs() + m.n_outputs() + r);
  }
  if (rng.uniform() < config.p_mutate_tag) {
    Protein& p = m.proteins[rng.uniform_int(m.size())];
    const int field = rng.uniform_int(3);
    const double noise = rng.normal(0.0, config.tag_mutation_sigma);
    double& tag = field == 0 ? p.id : field == 1 ? p.enh : p.inh;
    tag = clamp01(tag + noise);
  }
  if (rng.uniform() < config.p_mutate_dynamics) {
    const int which = rng.uniform_int(2);
    const double noise = rng.normal(0.0, config.tag_mutation_sigma);
    if (which == 0)
      m.beta = std::min(config.grn.beta_max, std::max(config.grn.beta_min, m.beta + noise));
    else
      m.delta = std::min(config.grn.delta_max, std::max(config.grn.delta_min, m.delta + noise));
  }
  return m;
}

namespace {

// best member of `sp` over `rounds` uniform draws; ties keep the lower index
int run_tournament(const std::vector<Individual>& population, const Species& sp, int rounds,
                   Rng& rng) {
  int best = -1;
  for (int r = 0; r < rounds; ++r) {
    const int idx = sp.members[rng.uniform_int(static_cast<int>(sp.members.size()))];
    if (best < 0 || *population[idx].fitness > *population[best].fitness ||
        (*population[idx].fitness == *population[best].fitness && idx < best))
      best = idx;
  }
  return best;
}

}  // namespace

std::vector<Individual> next_generation(const std::vector<Individual>& population,
                                        const std::vector<Species>& species,
                                        const EvolutionConfig& config, Rng& rng) {
  const int n = static_cast<int>(population.size());
  for (const auto& ind : population)
    if (!ind.fitness.has_value())
      throw std::logic_error("next_generation requires every fitness to be set");

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return *population[a].fitness > *population[b].fitness; });

  std::vector<Individual> next;
  const int elites = std::min(config.elite_count, n);
  for (int e = 0; e < elites; ++e) next.push_back(population[order[e]]);

  const int slots = n - elites;
  if (slots == 0) return next;

  const int ns = static_cast<int>(species.size());
  std::vector<double> mean(ns, 0.0);
  for (int s = 0; s < ns; ++s) {
    for (int idx : species[s].members) mean[s] += *population[idx].fitness;
    mean[s] /= static_cast<double>(species[s].members.size());
  }
  const double min_mean = *std::min_element(mean.begin(), mean.end());
  std::vector<double> weight(ns);
  double total = 0.0;
  for (int s = 0; s < ns; ++s) {
    weight[s] = mean[s] - min_mean + 1e-9;
    total += weight[s];
  }

  // largest-remainder apportionment of offspring slots
  std::vector<int> quota(ns, 0);
  std::vector<std::pair<double, int>> rem;
  int assigned = 0;
  for (int s = 0; s < ns; ++s) {
    const double exact = slots * weight[s] / total;
    quota[s] = static_cast<int>(std::floor(exact));
    assigned += quota[s];
    rem.emplace_back(exact - quota[s], s);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  int leftover = slots - assigned;
  while (leftover > 0)
    for (const auto& [frac, s] : rem) {
      if (leftover == 0) break;
      ++quota[s];
      --leftover;
    }

  for (int s = 0; s < ns; ++s) {
    for (int k = 0; k < quota[s]; ++k) {
      const bool do_cross = rng.uniform() < config.p_crossover;
      Genome child;
      if (do_cross) {
        int p1 = run_tournament(population, species[s], config.tournament_size, rng);
        int p2 = run_tournament(population, species[s], config.tournament_size, rng);
        if (*population[p2].fitness > *population[p1].fitness) std::swap(p1, p2);
        child = crossover(population[p1].genome, population[p2].genome, rng);
      } else {
        const int p = run_tournament(population, species[s], config.tournament_size, rng);
        child = population[p].genome;
      }
      next.push_back(Individual{mutate(child, config, rng), std::nullopt, std::nullopt});
    }
  }
  return next;
}

EvolveResult evolve(const FitnessFn& fitness_fn, const EvolutionConfig& config,
                    const ContextFn& context_fn, int n_workers) {
  {
    const auto problems = validate_config(config);
    if (!problems.empty()) {
      std::string msg = "invalid evolution config:";
      for (const auto& p : problems) msg += " " + p + ";";
      throw std::invalid_argument(msg);
    }
  }
  if (!fitness_fn) throw std::invalid_argument("evolve requires a fitness function");
  if (n_workers < 1) n_workers = 1;

  Rng rng(config.rng_seed);
  std::vector<Individual> population;
  for (int i = 0; i < config.population_size; ++i)
    population.push_back(
        Individual{random_genome(config.n_inputs, config.n_outputs, config, rng),
                   std::nullopt, std::nullopt});

  const ContextFn make_context =
      context_fn ? context_fn : ContextFn([&config](int gen) {
        return GenerationContext{gen, 0, derive_seed(config.rng_seed, 1, gen)};
      });

  EvolveResult result;
  bool have_best = false;
  std::vector<Species> species;

  for (int gen = 0; gen < config.generations; ++gen) {
    const GenerationContext ctx = make_context(gen);
    const int n = static_cast<int>(population.size());
    std::vector<double> fitness(n, 0.0);
    std::vector<std::exception_ptr> errors(n);

    auto evaluate_range = [&](int lo, int hi) {
      for (int i = lo; i < hi; ++i) {
        try {
          fitness[i] = fitness_fn(population[i].genome, ctx);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    if (n_workers <= 1 || n < 2) {
      evaluate_range(0, n);
    } else {
      const int workers = std::min(n_workers, n);
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) {
        const int lo = w * n / workers, hi = (w + 1) * n / workers;
        pool.emplace_back(evaluate_range, lo, hi);
      }
      for (auto& t : pool) t.join();
    }
    for (int i = 0; i < n; ++i) {
      if (!errors[i]) continue;
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw std::runtime_error("fitness evaluation failed at generation " +
                                 std::to_string(gen) + ", individual " + std::to_string(i) +
                                 ": " + e.what());
      }
    }
    for (int i = 0; i < n; ++i) population[i].fitness = fitness[i];

    species = speciate(population, config.speciation_threshold, species, rng);
    for (const auto& sp : species)
      for (int idx : sp.members) population[idx].species_id = sp.id;

    int best_idx = 0;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
      mean += fitness[i];
      if (fitness[i] > fitness[best_idx]) best_idx = i;
    }
    mean /= static_cast<double>(n);

    result.history.push_back(GenerationStats{gen, fitness[best_idx], mean,
                                             static_cast<int>(species.size()), ctx.model_id,
                                             ctx.init_seed});
    if (!have_best || fitness[best_idx] > *result.best.fitness) {
      result.best = population[best_idx];
      have_best = true;
    }

    if (gen + 1 < config.generations)
      population = next_generation(population, species, config, rng);
  }
  return result;
}

}  // namespace nmod::evo
