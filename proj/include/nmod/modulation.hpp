#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "nmod/grn.hpp"
#include "nmod/network.hpp"
#include "nmod/optimizer.hpp"

namespace nmod::mod {

// the six per-group signals each controller sees, all normalized into [0,1]
struct LayerFeatures {
  double location = 0.0;
  double mu_theta = 0.0;
  double sigma_theta = 0.0;
  double mu_grad = 0.0;
  double sigma_grad = 0.0;
  double rel_size = 0.0;

  std::array<double, 6> as_array() const {
    return {location, mu_theta, sigma_theta, mu_grad, sigma_grad, rel_size};
  }
};

struct GroupKey {
  int layer_index = 0;  // weighted-layer index
  nn::GroupKind group = nn::GroupKind::Weights;

  bool operator==(const GroupKey&) const = default;
};

// one regulatory-network copy per (weighted layer x {weights, biases}), all
// sharing a single genome; or a stub that always emits fixed hyperparameters
struct ControllerBank {
  grn::GrnConfig config;
  opt::BaseKind base = opt::BaseKind::Sgd;
  bool last_layer_pad_zero = false;  // pad the successor block with zeros instead
                                     // of replicating the last layer's features

  std::vector<GroupKey> keys;  // (0,W), (0,B), (1,W), (1,B), ...
  std::vector<grn::GrnState> states;  // aligned with keys (empty for stubs)

  std::optional<grn::CompiledGrn> grn;       // absent for stubs
  std::optional<std::vector<double>> fixed;  // decoded values a stub always emits

  int n_controllers() const { return static_cast<int>(keys.size()); }
};

// throws std::invalid_argument unless the genome exposes 13 inputs and the
// output count matching the base optimizer (4 for sgd, 8 for adam)
ControllerBank make_bank(const grn::Genome& genome, const grn::GrnConfig& config,
                         opt::BaseKind base, const nn::Network& net);

// bank that bypasses the regulatory network: `decoded` is (eta, alpha) for sgd
// or (eta, beta1, beta2, epsilon) for adam, every value in [0,1]
ControllerBank make_stub_bank(opt::BaseKind base, const std::vector<double>& decoded,
                              const nn::Network& net);

// per-group hyperparameters for one update step; aligned with bank keys.
// decay is always 0: time variation comes from the controllers themselves.
struct HyperDecision {
  opt::BaseKind base = opt::BaseKind::Sgd;
  std::vector<opt::SgdHyper> sgd;
  std::vector<opt::AdamHyper> adam;
};

LayerFeatures compute_layer_features(const nn::Network& net, const nn::Gradients& grads,
                                     const GroupKey& key);

// features for every controller key, aligned with the bank key order
std::vector<LayerFeatures> compute_all_features(const nn::Network& net,
                                                const nn::Gradients& grads);

// 13 controller inputs for `key`: own six features, the next weighted layer's
// six (same group kind; the last layer replicates its own unless pad-zero is
// chosen), then the constant 1.0
std::vector<double> assemble_inputs(const std::vector<LayerFeatures>& features,
                                    const GroupKey& key, int weighted_layer_count,
                                    bool last_layer_pad_zero);

// advances every controller by steps_per_query and decodes hyperparameters;
// an adam epsilon of exactly 0 is replaced with 1e-12
HyperDecision modulate(ControllerBank& bank, const std::vector<LayerFeatures>& features);

struct TelemetryRow {
  long long iteration = 0;
  int layer_index = 0;
  nn::GroupKind group = nn::GroupKind::Weights;
  std::array<double, 13> inputs{};
  std::vector<double> outputs;  // decoded values actually applied
};

// optimizer state per parameter group, aligned with Network::param_groups
struct OptStates {
  opt::BaseKind base = opt::BaseKind::Sgd;
  std::vector<opt::SgdState> sgd;
  std::vector<opt::AdamState> adam;
};

OptStates make_opt_states(const nn::Network& net, opt::BaseKind base);

// one modulated update: backward pass, feature extraction, controller decode,
// per-group optimizer step; returns the batch loss and appends one telemetry
// row per controller when `telemetry` is given
double neuromod_train_step(nn::Network& net, const nn::Tensor& batch,
                           const std::vector<int>& labels, nn::LossKind loss,
                           ControllerBank& bank, OptStates& states, long long iteration,
                           std::vector<TelemetryRow>* telemetry = nullptr);

// unmodulated update with fixed hyperparameters for every group
double baseline_train_step(nn::Network& net, const nn::Tensor& batch,
                           const std::vector<int>& labels, nn::LossKind loss,
                           const opt::Preset& preset, OptStates& states);

}  // namespace nmod::mod
