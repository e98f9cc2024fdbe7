#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

// Artificial gene regulatory network core: protein model, tag-affinity
// computation, concentration dynamics and the paired-output decoding that
// turns concentrations into values in [0,1].

namespace nmod::grn {

enum class ProteinKind { Input, Output, Regulator };

struct Protein {
  double id = 0.0;   // identifier tag, in [0,1]
  double enh = 0.0;  // enhancer tag, in [0,1]
  double inh = 0.0;  // inhibitor tag, in [0,1]
  ProteinKind kind = ProteinKind::Regulator;
};

// Proteins are kept in canonical order: all inputs, then all outputs, then
// all regulators. Serialization and state vectors rely on this order.
struct Genome {
  std::vector<Protein> proteins;
  double beta = 1.0;   // affinity sharpness
  double delta = 1.0;  // reaction speed

  int count(ProteinKind k) const;
  int n_inputs() const { return count(ProteinKind::Input); }
  int n_outputs() const { return count(ProteinKind::Output); }
  int n_regulators() const { return count(ProteinKind::Regulator); }
  int size() const { return static_cast<int>(proteins.size()); }

  static Genome make(std::vector<Protein> inputs, std::vector<Protein> outputs,
                     std::vector<Protein> regulators, double beta, double delta);
};

enum class AffinityMode {
  // A = -beta * u, exactly as printed: closer tags give *weaker* influence.
  PaperLiteral,
  // A = beta * (u - u_max): a perfect tag match is the strongest influence
  // and all exponents are <= 0. Default.
  RelativeMax,
};

struct GrnConfig {
  double u_size = 1.0;  // affinity offset; tags live in [0,1] so 1.0 keeps u in [0,1]
  AffinityMode affinity_mode = AffinityMode::RelativeMax;
  int steps_per_query = 1;
  double beta_min = 0.05;
  double beta_max = 2.0;
  double delta_min = 0.05;
  double delta_max = 2.0;
};

// Concentration vector aligned to genome order, plus the kind counts needed
// to interpret it on its own.
struct GrnState {
  std::vector<double> concentrations;
  int n_inputs = 0;
  int n_outputs = 0;
  int n_regulators = 0;

  int size() const { return static_cast<int>(concentrations.size()); }
};

// Influence exponents; entry [i*n + j] is the effect of protein j on protein i.
struct AffinityPair {
  int n = 0;
  std::vector<double> a_plus;
  std::vector<double> a_minus;

  double plus(int i, int j) const { return a_plus[static_cast<size_t>(i) * n + j]; }
  double minus(int i, int j) const { return a_minus[static_cast<size_t>(i) * n + j]; }
};

// Returns every invariant violation as a human-readable message; empty means
// the genome is valid.
std::vector<std::string> validate_genome(const Genome& genome, const GrnConfig& config);

AffinityPair compute_affinities(const Genome& genome, const GrnConfig& config);

// S = e^{A+} - e^{A-}, elementwise, n x n row-major.
std::vector<double> signature_matrix(const Genome& genome, const GrnConfig& config);

// Inputs at 0, outputs/regulators uniform so they sum to 1 from step zero.
GrnState init_state(const Genome& genome, const GrnConfig& config);

// Replaces input concentrations; values are clamped to [0,1]. Length must
// equal the input count.
void set_inputs(GrnState& state, std::span<const double> values);

// Concentrations of output proteins, in genome order.
std::vector<double> read_raw_outputs(const GrnState& state);

// Decodes 2*n_params raw output concentrations into n_params values in [0,1]:
// each value is |a-b|/(a+b) over its pair, 0 when the pair sums to 0.
std::vector<double> paired_outputs(std::span<const double> raw, int n_params);

// Genome compiled to exponentiated influence matrices. Immutable; one
// instance can step any number of states for the same genome.
class CompiledGrn {
 public:
  CompiledGrn(const Genome& genome, const GrnConfig& config);

  // One dynamics update using the signature matrix (canonical path):
  // non-input concentrations move by delta/N * sum_j c_j * S_ij with j over
  // inputs and regulators, clamp at 0, then outputs+regulators are
  // renormalized to sum 1 (uniform reset if the sum is 0).
  void step(GrnState& state) const;

  // Same update computed as two separate influence sums then subtracted;
  // agrees with step() to ~1e-12 per concentration. Kept as the
  // equation-shaped reference path.
  void step_direct(GrnState& state) const;

  GrnState make_state() const;

  int n() const { return n_; }
  int n_inputs() const { return n_in_; }
  int n_outputs() const { return n_out_; }
  int n_regulators() const { return n_reg_; }
  double delta() const { return delta_; }

 private:
  void finish_step(GrnState& state, const std::vector<double>& updated) const;

  int n_ = 0, n_in_ = 0, n_out_ = 0, n_reg_ = 0;
  double delta_ = 0.0;
  std::vector<double> e_plus_;    // e^{A+}, n x n row-major
  std::vector<double> e_minus_;   // e^{A-}
  std::vector<double> signature_; // e^{A+} - e^{A-}
};

// Convenience single-step entry point; compiles the genome each call.
void grn_step(const Genome& genome, GrnState& state, const GrnConfig& config);

}  // namespace nmod::grn
