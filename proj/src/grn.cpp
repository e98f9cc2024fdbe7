#include "nmod/grn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nmod::grn {

namespace {

const char* kind_name(ProteinKind k) {
  switch (k) {
    case ProteinKind::Input: return "input";
    case ProteinKind::Output: return "output";
    default: return "regulator";
  }
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

int Genome::count(ProteinKind k) const {
  int c = 0;
  for (const auto& p : proteins)
    if (p.kind == k) ++c;
  return c;
}

Genome Genome::make(std::vector<Protein> inputs, std::vector<Protein> outputs,
                    std::vector<Protein> regulators, double beta, double delta) {
  Genome g;
  g.beta = beta;
  g.delta = delta;
  g.proteins.reserve(inputs.size() + outputs.size() + regulators.size());
  for (auto& p : inputs) {
    p.kind = ProteinKind::Input;
    g.proteins.push_back(p);
  }
  for (auto& p : outputs) {
    p.kind = ProteinKind::Output;
    g.proteins.push_back(p);
  }
  for (auto& p : regulators) {
    p.kind = ProteinKind::Regulator;
    g.proteins.push_back(p);
  }
  return g;
}

std::vector<std::string> validate_genome(const Genome& genome, const GrnConfig& config) {
  std::vector<std::string> violations;
  auto add = [&](std::string msg) { violations.push_back(std::move(msg)); };

  for (int i = 0; i < genome.size(); ++i) {
    const Protein& p = genome.proteins[i];
    auto tag = [&](const char* field, double v) {
      if (!in_unit(v))
        add("protein " + std::to_string(i) + " (" + kind_name(p.kind) + "): " + field +
            " tag " + std::to_string(v) + " outside [0,1]");
    };
    tag("id", p.id);
    tag("enh", p.enh);
    tag("inh", p.inh);
  }

  if (genome.beta < config.beta_min || genome.beta > config.beta_max)
    add("beta " + std::to_string(genome.beta) + " outside [" + std::to_string(config.beta_min) +
        ", " + std::to_string(config.beta_max) + "]");
  if (genome.delta < config.delta_min || genome.delta > config.delta_max)
    add("delta " + std::to_string(genome.delta) + " outside [" +
        std::to_string(config.delta_min) + ", " + std::to_string(config.delta_max) + "]");

  if (genome.n_inputs() < 1) add("no input proteins");
  if (genome.n_outputs() < 1) add("no output proteins");

  // canonical order: inputs, outputs, regulators
  int phase = 0;
  for (int i = 0; i < genome.size(); ++i) {
    int k = genome.proteins[i].kind == ProteinKind::Input    ? 0
            : genome.proteins[i].kind == ProteinKind::Output ? 1
                                                             : 2;
    if (k < phase) {
      add("protein order not canonical (input, output, regulator) at index " +
          std::to_string(i));
      break;
    }
    phase = k;
  }
  return violations;
}

AffinityPair compute_affinities(const Genome& genome, const GrnConfig& config) {
  auto violations = validate_genome(genome, config);
  if (!violations.empty())
    throw std::invalid_argument("compute_affinities: invalid genome: " + violations.front());

  const int n = genome.size();
  AffinityPair out;
  out.n = n;
  out.a_plus.resize(static_cast<size_t>(n) * n);
  out.a_minus.resize(static_cast<size_t>(n) * n);

  std::vector<double> u_plus(static_cast<size_t>(n) * n), u_minus(static_cast<size_t>(n) * n);
  double up_max = -1e300, um_max = -1e300;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double up = config.u_size - std::abs(genome.proteins[j].enh - genome.proteins[i].id);
      const double um = config.u_size - std::abs(genome.proteins[j].inh - genome.proteins[i].id);
      u_plus[static_cast<size_t>(i) * n + j] = up;
      u_minus[static_cast<size_t>(i) * n + j] = um;
      up_max = std::max(up_max, up);
      um_max = std::max(um_max, um);
    }
  }

  for (size_t k = 0; k < u_plus.size(); ++k) {
    if (config.affinity_mode == AffinityMode::PaperLiteral) {
      out.a_plus[k] = -genome.beta * u_plus[k];
      out.a_minus[k] = -genome.beta * u_minus[k];
    } else {
      out.a_plus[k] = genome.beta * (u_plus[k] - up_max);
      out.a_minus[k] = genome.beta * (u_minus[k] - um_max);
    }
  }
  return out;
}

std::vector<double> signature_matrix(const Genome& genome, const GrnConfig& config) {
  AffinityPair a = compute_affinities(genome, config);
  std::vector<double> s(a.a_plus.size());
  for (size_t k = 0; k < s.size(); ++k) s[k] = std::exp(a.a_plus[k]) - std::exp(a.a_minus[k]);
  return s;
}

GrnState init_state(const Genome& genome, const GrnConfig& config) {
  auto violations = validate_genome(genome, config);
  if (!violations.empty())
    throw std::invalid_argument("init_state: invalid genome: " + violations.front());

  GrnState st;
  st.n_inputs = genome.n_inputs();
  st.n_outputs = genome.n_outputs();
  st.n_regulators = genome.n_regulators();
  st.concentrations.assign(genome.proteins.size(), 0.0);
  const double uniform = 1.0 / (st.n_outputs + st.n_regulators);
  for (int i = st.n_inputs; i < st.size(); ++i) st.concentrations[i] = uniform;
  return st;
}

void set_inputs(GrnState& state, std::span<const double> values) {
  if (static_cast<int>(values.size()) != state.n_inputs)
    throw std::invalid_argument("set_inputs: expected " + std::to_string(state.n_inputs) +
                                " values, got " + std::to_string(values.size()));
  for (int i = 0; i < state.n_inputs; ++i)
    state.concentrations[i] = std::clamp(values[i], 0.0, 1.0);
}

std::vector<double> read_raw_outputs(const GrnState& state) {
  return {state.concentrations.begin() + state.n_inputs,
          state.concentrations.begin() + state.n_inputs + state.n_outputs};
}

std::vector<double> paired_outputs(std::span<const double> raw, int n_params) {
  if (static_cast<int>(raw.size()) != 2 * n_params)
    throw std::invalid_argument("paired_outputs: expected " + std::to_string(2 * n_params) +
                                " raw values, got " + std::to_string(raw.size()));
  std::vector<double> out(static_cast<size_t>(n_params));
  for (int i = 0; i < n_params; ++i) {
    const double a = raw[2 * i], b = raw[2 * i + 1];
    if (a < 0.0 || b < 0.0)
      throw std::invalid_argument("paired_outputs: negative concentration");
    const double sum = a + b;
    out[i] = sum == 0.0 ? 0.0 : std::abs(a - b) / sum;
  }
  return out;
}

CompiledGrn::CompiledGrn(const Genome& genome, const GrnConfig& config) {
  AffinityPair a = compute_affinities(genome, config);
  n_ = a.n;
  n_in_ = genome.n_inputs();
  n_out_ = genome.n_outputs();
  n_reg_ = genome.n_regulators();
  delta_ = genome.delta;
  e_plus_.resize(a.a_plus.size());
  e_minus_.resize(a.a_minus.size());
  signature_.resize(a.a_plus.size());
  for (size_t k = 0; k < e_plus_.size(); ++k) {
    e_plus_[k] = std::exp(a.a_plus[k]);
    e_minus_[k] = std::exp(a.a_minus[k]);
    signature_[k] = e_plus_[k] - e_minus_[k];
  }
}

GrnState CompiledGrn::make_state() const {
  GrnState st;
  st.n_inputs = n_in_;
  st.n_outputs = n_out_;
  st.n_regulators = n_reg_;
  st.concentrations.assign(static_cast<size_t>(n_), 0.0);
  const double uniform = 1.0 / (n_out_ + n_reg_);
  for (int i = n_in_; i < n_; ++i) st.concentrations[i] = uniform;
  return st;
}

void CompiledGrn::finish_step(GrnState& state, const std::vector<double>& updated) const {
  double sum = 0.0;
  for (int i = n_in_; i < n_; ++i) sum += updated[i];
  if (sum == 0.0) {
    const double uniform = 1.0 / (n_out_ + n_reg_);
    for (int i = n_in_; i < n_; ++i) state.concentrations[i] = uniform;
  } else {
    for (int i = n_in_; i < n_; ++i) state.concentrations[i] = updated[i] / sum;
  }
}

void CompiledGrn::step(GrnState& state) const {
  if (state.size() != n_)
    throw std::invalid_argument("grn step: state size does not match genome");
  const auto& c = state.concentrations;
  std::vector<double> updated(c.begin(), c.end());
  const int reg_begin = n_in_ + n_out_;
  for (int i = n_in_; i < n_; ++i) {
    const double* row = signature_.data() + static_cast<size_t>(i) * n_;
    double acc = 0.0;
    for (int j = 0; j < n_in_; ++j) acc += c[j] * row[j];      // inputs
    for (int j = reg_begin; j < n_; ++j) acc += c[j] * row[j]; // regulators
    updated[i] = std::max(0.0, c[i] + delta_ * (acc / n_));
  }
  finish_step(state, updated);
}

void CompiledGrn::step_direct(GrnState& state) const {
  if (state.size() != n_)
    throw std::invalid_argument("grn step: state size does not match genome");
  const auto& c = state.concentrations;
  std::vector<double> updated(c.begin(), c.end());
  const int reg_begin = n_in_ + n_out_;
  for (int i = n_in_; i < n_; ++i) {
    const double* ep = e_plus_.data() + static_cast<size_t>(i) * n_;
    const double* em = e_minus_.data() + static_cast<size_t>(i) * n_;
    double g = 0.0, h = 0.0;
    for (int j = 0; j < n_in_; ++j) {
      g += c[j] * ep[j];
      h += c[j] * em[j];
    }
    for (int j = reg_begin; j < n_; ++j) {
      g += c[j] * ep[j];
      h += c[j] * em[j];
    }
    g /= n_;
    h /= n_;
    updated[i] = std::max(0.0, c[i] + delta_ * (g - h));
  }
  finish_step(state, updated);
}

void grn_step(const Genome& genome, GrnState& state, const GrnConfig& config) {
  CompiledGrn(genome, config).step(state);
}

}  // namespace nmod::grn
