#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nmod/evolution.hpp"
#include "nmod/grn.hpp"
#include "nmod/rng.hpp"

using namespace nmod;
using namespace nmod::evo;
using grn::Genome;
using grn::Protein;

namespace {

Protein prot(double id, double enh, double inh) { return Protein{id, enh, inh}; }

Protein flat(double v) { return Protein{v, v, v}; }

Genome genome_with_regs(const std::vector<double>& reg_vals, double beta, double delta) {
  std::vector<Protein> regs;
  for (double v : reg_vals) regs.push_back(flat(v));
  return Genome::make({flat(0.2)}, {flat(0.7)}, regs, beta, delta);
}

// exhaustive min-cost matching of pool_a into pool_b (for small instances)
double brute_force_distance(const Genome& a, const Genome& b) {
  std::vector<Protein> pa, pb;
  for (const auto& p : a.proteins)
    if (p.kind != grn::ProteinKind::Input) pa.push_back(p);
  for (const auto& p : b.proteins)
    if (p.kind != grn::ProteinKind::Input) pb.push_back(p);
  if (pa.size() > pb.size()) std::swap(pa, pb);
  double best = 1e300;
  std::vector<int> choice(pb.size());
  for (size_t i = 0; i < pb.size(); ++i) choice[i] = static_cast<int>(i);
  std::sort(choice.begin(), choice.end());
  do {
    double cost = 0.0;
    for (size_t i = 0; i < pa.size(); ++i) cost += protein_distance(pa[i], pb[choice[i]]);
    best = std::min(best, cost);
  } while (std::next_permutation(choice.begin(), choice.end()));
  best += std::fabs(a.beta - b.beta) + std::fabs(a.delta - b.delta);
  best += static_cast<double>(pb.size() - pa.size());
  return best;
}

bool genomes_equal(const Genome& a, const Genome& b) {
  if (a.proteins.size() != b.proteins.size() || a.beta != b.beta || a.delta != b.delta)
    return false;
  for (size_t i = 0; i < a.proteins.size(); ++i) {
    const auto &p = a.proteins[i], &q = b.proteins[i];
    if (p.id != q.id || p.enh != q.enh || p.inh != q.inh || p.kind != q.kind) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("random_genome has the requested shape") {
  EvolutionConfig cfg;
  Rng rng(5);
  Genome g = random_genome(13, 4, cfg, rng);
  CHECK(g.size() == 18);
  CHECK(g.n_inputs() == 13);
  CHECK(g.n_outputs() == 4);
  CHECK(g.n_regulators() == 1);

  Genome h = random_genome(13, 8, cfg, rng);
  CHECK(h.size() == 22);

  CHECK(validate_genome(g, cfg.grn).empty());
  CHECK(validate_genome(h, cfg.grn).empty());
}

TEST_CASE("random_genome is seed-deterministic") {
  EvolutionConfig cfg;
  Rng a(123), b(123);
  CHECK(genomes_equal(random_genome(5, 3, cfg, a), random_genome(5, 3, cfg, b)));
}

TEST_CASE("protein_distance is the tag L1 metric") {
  CHECK(protein_distance(prot(0.3, 0.4, 0.5), prot(0.3, 0.4, 0.5)) == 0.0);
  CHECK(protein_distance(prot(0.3, 0.4, 0.5), prot(0.4, 0.6, 0.5)) ==
        doctest::Approx(0.3).epsilon(1e-15));
  CHECK(protein_distance(prot(0.0, 0.0, 0.0), prot(1.0, 1.0, 1.0)) == 3.0);
}

TEST_CASE("genome_distance basics") {
  Genome a = genome_with_regs({0.1, 0.5}, 1.0, 0.8);
  CHECK(genome_distance(a, a) == 0.0);

  Genome b = a;
  b.beta = 1.5;
  CHECK(genome_distance(a, b) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(genome_distance(a, b) == genome_distance(b, a));

  Genome c = Genome::make({flat(0.2), flat(0.3)}, {flat(0.7)}, {}, 1.0, 0.8);
  CHECK_THROWS_AS(genome_distance(a, c), std::invalid_argument);
}

TEST_CASE("genome_distance matches exhaustive alignment on a 3-vs-4 regulator pair") {
  Genome a = genome_with_regs({0.1, 0.5, 0.9}, 1.0, 0.8);
  Genome b = genome_with_regs({0.12, 0.52, 0.92, 0.3}, 1.25, 0.6);
  const double expect = brute_force_distance(a, b);
  CHECK(genome_distance(a, b) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(genome_distance(b, a) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("genome_distance is symmetric on random genomes") {
  EvolutionConfig cfg;
  Rng rng(77);
  for (int t = 0; t < 30; ++t) {
    cfg.initial_regulators = rng.uniform_int(4);
    Genome a = random_genome(2, 2, cfg, rng);
    cfg.initial_regulators = rng.uniform_int(4);
    Genome b = random_genome(2, 2, cfg, rng);
    CHECK(genome_distance(a, b) == doctest::Approx(genome_distance(b, a)).epsilon(1e-12));
    CHECK(genome_distance(a, b) >= 0.0);
  }
}

TEST_CASE("speciate groups an identical population into one species") {
  Genome g = genome_with_regs({0.4}, 1.0, 1.0);
  std::vector<Individual> pop(6, Individual{g, 1.0, std::nullopt});
  Rng rng(3);
  auto species = speciate(pop, 0.45, {}, rng);
  REQUIRE(species.size() == 1);
  CHECK(species[0].members.size() == 6);
}

TEST_CASE("speciate separates distant clusters and giant thresholds merge them") {
  std::vector<Individual> pop;
  for (int i = 0; i < 4; ++i)
    pop.push_back(Individual{genome_with_regs({0.05, 0.1}, 0.1, 0.1), 0.0, std::nullopt});
  for (int i = 0; i < 4; ++i)
    pop.push_back(Individual{genome_with_regs({0.9, 0.95}, 1.9, 1.9), 0.0, std::nullopt});

  Rng rng(4);
  auto species = speciate(pop, 0.45, {}, rng);
  CHECK(species.size() == 2);

  Rng rng2(4);
  auto one = speciate(pop, 1e9, {}, rng2);
  CHECK(one.size() == 1);
}

TEST_CASE("speciate yields a partition of the population") {
  EvolutionConfig cfg;
  Rng rng(9);
  std::vector<Individual> pop;
  for (int i = 0; i < 40; ++i) {
    cfg.initial_regulators = rng.uniform_int(3);
    pop.push_back(Individual{random_genome(2, 2, cfg, rng), 0.0, std::nullopt});
  }
  auto species = speciate(pop, 0.45, {}, rng);
  std::vector<int> seen(pop.size(), 0);
  for (const auto& sp : species) {
    CHECK(!sp.members.empty());
    for (int idx : sp.members) seen[idx] += 1;
  }
  for (int c : seen) CHECK(c == 1);
}

TEST_CASE("crossover of a genome with itself reproduces it") {
  Genome a = genome_with_regs({0.3, 0.6}, 1.2, 0.9);
  Rng rng(11);
  CHECK(genomes_equal(crossover(a, a, rng), a));
}

TEST_CASE("crossover on a single differing regulator tag picks one parent's value") {
  Genome a = genome_with_regs({0.3}, 1.0, 1.0);
  Genome b = a;
  b.proteins.back().id = 0.35;
  Rng rng(13);
  bool saw_a = false, saw_b = false;
  for (int t = 0; t < 40; ++t) {
    Genome child = crossover(a, b, rng);
    const double v = child.proteins.back().id;
    CHECK((v == 0.3 || v == 0.35));
    saw_a |= v == 0.3;
    saw_b |= v == 0.35;
  }
  CHECK(saw_a);
  CHECK(saw_b);
}

TEST_CASE("crossover keeps the fitter parent's unaligned regulators") {
  Genome big = genome_with_regs({0.1, 0.5, 0.9}, 1.0, 1.0);
  Genome small = genome_with_regs({0.11}, 1.0, 1.0);
  Rng rng(17);
  CHECK(crossover(big, small, rng).n_regulators() == 3);
  CHECK(crossover(small, big, rng).n_regulators() == 1);
}

TEST_CASE("crossover is seed-deterministic") {
  EvolutionConfig cfg;
  cfg.initial_regulators = 3;
  Rng mk(19);
  Genome a = random_genome(3, 2, cfg, mk), b = random_genome(3, 2, cfg, mk);
  Rng r1(21), r2(21);
  CHECK(genomes_equal(crossover(a, b, r1), crossover(a, b, r2)));
}

TEST_CASE("mutate with zero rates is the identity") {
  EvolutionConfig cfg;
  cfg.p_add_protein = cfg.p_remove_protein = cfg.p_mutate_tag = cfg.p_mutate_dynamics = 0.0;
  Genome g = genome_with_regs({0.4}, 1.0, 1.0);
  Rng rng(23);
  CHECK(genomes_equal(mutate(g, cfg, rng), g));
}

TEST_CASE("mutate with certain add grows the regulator count by one") {
  EvolutionConfig cfg;
  cfg.p_add_protein = 1.0;
  cfg.p_remove_protein = cfg.p_mutate_tag = cfg.p_mutate_dynamics = 0.0;
  Genome g = genome_with_regs({0.4}, 1.0, 1.0);
  Rng rng(29);
  Genome m = mutate(g, cfg, rng);
  CHECK(m.n_regulators() == 2);
  CHECK(m.n_inputs() == g.n_inputs());
  CHECK(m.n_outputs() == g.n_outputs());
  CHECK(validate_genome(m, cfg.grn).empty());
}

TEST_CASE("mutated tags stay clamped to the unit interval") {
  EvolutionConfig cfg;
  cfg.p_add_protein = cfg.p_remove_protein = cfg.p_mutate_dynamics = 0.0;
  cfg.p_mutate_tag = 1.0;
  cfg.tag_mutation_sigma = 5.0;  // force frequent clamping
  Genome g = Genome::make({flat(1.0)}, {flat(1.0)}, {flat(1.0)}, 1.0, 1.0);
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    Genome m = mutate(g, cfg, rng);
    for (const auto& p : m.proteins) {
      CHECK(p.id >= 0.0); CHECK(p.id <= 1.0);
      CHECK(p.enh >= 0.0); CHECK(p.enh <= 1.0);
      CHECK(p.inh >= 0.0); CHECK(p.inh <= 1.0);
    }
  }
}

TEST_CASE("aggressive mutation always yields valid genomes of fixed interface") {
  EvolutionConfig cfg;
  cfg.p_add_protein = 0.5;
  cfg.p_remove_protein = 0.5;
  cfg.p_mutate_tag = 1.0;
  cfg.p_mutate_dynamics = 1.0;
  Rng rng(37);
  Genome g = random_genome(4, 3, cfg, rng);
  for (int t = 0; t < 300; ++t) {
    g = mutate(g, cfg, rng);
    CHECK(g.n_inputs() == 4);
    CHECK(g.n_outputs() == 3);
    CHECK(validate_genome(g, cfg.grn).empty());
  }
}

TEST_CASE("next_generation with full elitism returns the same multiset") {
  EvolutionConfig cfg;
  cfg.population_size = 6;
  cfg.elite_count = 6;  // tolerated at this layer; evolve() rejects it
  Rng rng(41);
  std::vector<Individual> pop;
  for (int i = 0; i < 6; ++i)
    pop.push_back(Individual{genome_with_regs({0.1 * i}, 1.0, 1.0), double(i % 3), std::nullopt});
  auto species = speciate(pop, 0.45, {}, rng);
  auto next = next_generation(pop, species, cfg, rng);
  REQUIRE(next.size() == 6);
  std::vector<char> used(6, 0);
  for (const auto& child : next) {
    bool found = false;
    for (int i = 0; i < 6 && !found; ++i)
      if (!used[i] && genomes_equal(child.genome, pop[i].genome)) {
        used[i] = 1;
        found = true;
      }
    CHECK(found);
  }
}

TEST_CASE("next_generation preserves population size and genome validity") {
  EvolutionConfig cfg;
  cfg.population_size = 30;
  Rng rng(43);
  std::vector<Individual> pop;
  for (int i = 0; i < 30; ++i) {
    cfg.initial_regulators = rng.uniform_int(3);
    pop.push_back(Individual{random_genome(3, 2, cfg, rng), rng.uniform(), std::nullopt});
  }
  std::vector<Species> species;
  for (int round = 0; round < 5; ++round) {
    species = speciate(pop, 0.45, species, rng);
    pop = next_generation(pop, species, cfg, rng);
    REQUIRE(pop.size() == 30);
    for (auto& ind : pop) {
      CHECK(validate_genome(ind.genome, cfg.grn).empty());
      ind.fitness = rng.uniform();
    }
  }
}

TEST_CASE("offspring slots favor the fitter species") {
  EvolutionConfig cfg;
  cfg.population_size = 10;
  cfg.elite_count = 0;
  cfg.p_crossover = 0.0;
  cfg.p_add_protein = cfg.p_remove_protein = cfg.p_mutate_tag = cfg.p_mutate_dynamics = 0.0;
  std::vector<Individual> pop;
  for (int i = 0; i < 5; ++i)
    pop.push_back(Individual{genome_with_regs({0.05}, 0.1, 0.1), 1.0, std::nullopt});
  for (int i = 0; i < 5; ++i)
    pop.push_back(Individual{genome_with_regs({0.95}, 1.9, 1.9), 0.0, std::nullopt});
  Rng rng(47);
  auto species = speciate(pop, 0.45, {}, rng);
  REQUIRE(species.size() == 2);
  auto next = next_generation(pop, species, cfg, rng);
  int from_fit = 0;
  for (const auto& child : next)
    if (child.genome.beta < 1.0) ++from_fit;
  CHECK(from_fit == 10);
}

TEST_CASE("evolve on a constant fitness yields a flat history") {
  EvolutionConfig cfg;
  cfg.population_size = 12;
  cfg.generations = 6;
  cfg.n_inputs = 2;
  cfg.n_outputs = 2;
  cfg.rng_seed = 51;
  auto res = evolve([](const Genome&, const GenerationContext&) { return 0.25; }, cfg);
  REQUIRE(res.history.size() == 6);
  for (const auto& row : res.history) {
    CHECK(row.best == 0.25);
    CHECK(row.mean == doctest::Approx(0.25).epsilon(1e-15));
  }
  CHECK(*res.best.fitness == 0.25);
}

TEST_CASE("evolve toward a target genome never loses ground with elitism") {
  EvolutionConfig cfg;
  cfg.population_size = 20;
  cfg.generations = 10;
  cfg.n_inputs = 2;
  cfg.n_outputs = 2;
  cfg.rng_seed = 53;
  Rng mk(55);
  const Genome target = random_genome(2, 2, cfg, mk);
  auto res = evolve(
      [&](const Genome& g, const GenerationContext&) { return -genome_distance(g, target); },
      cfg);
  for (size_t i = 1; i < res.history.size(); ++i)
    CHECK(res.history[i].best >= res.history[i - 1].best);
  CHECK(*res.best.fitness == res.history.back().best);
}

TEST_CASE("evolve history is identical across worker counts") {
  EvolutionConfig cfg;
  cfg.population_size = 15;
  cfg.generations = 5;
  cfg.n_inputs = 3;
  cfg.n_outputs = 2;
  cfg.rng_seed = 57;
  auto fit = [](const Genome& g, const GenerationContext& ctx) {
    double s = g.beta + g.delta + double(ctx.generation) * 0.001;
    for (const auto& p : g.proteins) s += p.id - p.enh + 0.5 * p.inh;
    return s;
  };
  auto a = evolve(fit, cfg, nullptr, 1);
  auto b = evolve(fit, cfg, nullptr, 4);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].best == b.history[i].best);
    CHECK(a.history[i].mean == b.history[i].mean);
    CHECK(a.history[i].species_count == b.history[i].species_count);
    CHECK(a.history[i].seed == b.history[i].seed);
  }
  CHECK(genomes_equal(a.best.genome, b.best.genome));
}

TEST_CASE("evolve threads the caller's generation context through the history") {
  EvolutionConfig cfg;
  cfg.population_size = 8;
  cfg.generations = 4;
  cfg.n_inputs = 2;
  cfg.n_outputs = 2;
  cfg.rng_seed = 59;
  auto ctx_fn = [](int gen) {
    return GenerationContext{gen, gen * 7, static_cast<std::uint64_t>(gen) + 100};
  };
  auto res = evolve([](const Genome& g, const GenerationContext& c) {
    return g.beta + 0.01 * c.model_id;
  }, cfg, ctx_fn);
  REQUIRE(res.history.size() == 4);
  for (int gen = 0; gen < 4; ++gen) {
    CHECK(res.history[gen].generation == gen);
    CHECK(res.history[gen].model_id == gen * 7);
    CHECK(res.history[gen].seed == static_cast<std::uint64_t>(gen) + 100);
  }
}

TEST_CASE("evolve reports where a fitness evaluation failed") {
  EvolutionConfig cfg;
  cfg.population_size = 5;
  cfg.generations = 2;
  cfg.n_inputs = 2;
  cfg.n_outputs = 2;
  auto boom = [](const Genome&, const GenerationContext&) -> double {
    throw std::runtime_error("boom");
  };
  try {
    evolve(boom, cfg);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("generation 0") != std::string::npos);
    CHECK(msg.find("individual 0") != std::string::npos);
    CHECK(msg.find("boom") != std::string::npos);
  }
}

TEST_CASE("evolve rejects a malformed configuration") {
  EvolutionConfig cfg;
  cfg.population_size = 4;
  cfg.elite_count = 4;
  auto fit = [](const Genome&, const GenerationContext&) { return 0.0; };
  CHECK_THROWS_AS(evolve(fit, cfg), std::invalid_argument);

  EvolutionConfig bad2;
  bad2.p_crossover = 1.5;
  CHECK(!validate_config(bad2).empty());
  CHECK(validate_config(EvolutionConfig{}).empty());
}
