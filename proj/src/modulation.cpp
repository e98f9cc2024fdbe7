#include "nmod/modulation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nmod::mod {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

std::vector<GroupKey> keys_for(const nn::Network& net) {
  std::vector<GroupKey> keys;
  for (int l = 0; l < net.weighted_layer_count; ++l) {
    keys.push_back(GroupKey{l, nn::GroupKind::Weights});
    keys.push_back(GroupKey{l, nn::GroupKind::Biases});
  }
  return keys;
}

int key_index(const GroupKey& key) {
  return 2 * key.layer_index + (key.group == nn::GroupKind::Biases ? 1 : 0);
}

int expected_outputs(opt::BaseKind base) { return base == opt::BaseKind::Sgd ? 4 : 8; }

int decoded_count(opt::BaseKind base) { return base == opt::BaseKind::Sgd ? 2 : 4; }

}  // namespace

ControllerBank make_bank(const grn::Genome& genome, const grn::GrnConfig& config,
                         opt::BaseKind base, const nn::Network& net) {
  if (genome.n_inputs() != 13)
    throw std::invalid_argument("controller genome must have 13 input proteins, has " +
                                std::to_string(genome.n_inputs()));
  if (genome.n_outputs() != expected_outputs(base))
    throw std::invalid_argument("controller genome must have " +
                                std::to_string(expected_outputs(base)) +
                                " output proteins for this optimizer, has " +
                                std::to_string(genome.n_outputs()));
  ControllerBank bank;
  bank.config = config;
  bank.base = base;
  bank.keys = keys_for(net);
  bank.grn.emplace(genome, config);
  for (size_t i = 0; i < bank.keys.size(); ++i) bank.states.push_back(bank.grn->make_state());
  return bank;
}

ControllerBank make_stub_bank(opt::BaseKind base, const std::vector<double>& decoded,
                              const nn::Network& net) {
  if (static_cast<int>(decoded.size()) != decoded_count(base))
    throw std::invalid_argument("stub controller needs " + std::to_string(decoded_count(base)) +
                                " decoded values");
  for (double v : decoded)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("stub controller values must lie in [0, 1]");
  ControllerBank bank;
  bank.base = base;
  bank.keys = keys_for(net);
  bank.fixed = decoded;
  return bank;
}

LayerFeatures compute_layer_features(const nn::Network& net, const nn::Gradients& grads,
                                     const GroupKey& key) {
  const int idx = key_index(key);
  if (idx < 0 || idx >= static_cast<int>(net.param_groups.size()))
    throw std::invalid_argument("group key outside the network's weighted layers");
  const nn::Tensor& values = net.param_groups[static_cast<size_t>(idx)].values;
  const nn::Tensor& grad = grads.groups[static_cast<size_t>(idx)];
  if (grad.shape != values.shape)
    throw std::invalid_argument("gradient shape does not match the parameter group");

  LayerFeatures f;
  const int layer_count = net.weighted_layer_count;
  f.location = layer_count > 1
                   ? static_cast<double>(key.layer_index) / (layer_count - 1)
                   : 0.0;

  int max_size = 0;
  for (const auto& g : net.param_groups) max_size = std::max(max_size, g.size());
  f.rel_size = static_cast<double>(values.size()) / max_size;

  auto moments = [](const nn::Tensor& t, double& mu, double& sigma) {
    const int n = t.size();
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::fabs(t[i]);
    mu = sum / n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = std::fabs(t[i]) - mu;
      var += d * d;
    }
    sigma = std::sqrt(var / n);
  };
  double mu = 0.0, sigma = 0.0;
  moments(values, mu, sigma);
  f.mu_theta = clamp01(mu);
  f.sigma_theta = clamp01(sigma);
  moments(grad, mu, sigma);
  f.mu_grad = clamp01(mu);
  f.sigma_grad = clamp01(sigma);
  return f;
}

std::vector<LayerFeatures> compute_all_features(const nn::Network& net,
                                                const nn::Gradients& grads) {
  std::vector<LayerFeatures> out;
  for (const GroupKey& key : keys_for(net)) out.push_back(compute_layer_features(net, grads, key));
  return out;
}

std::vector<double> assemble_inputs(const std::vector<LayerFeatures>& features,
                                    const GroupKey& key, int weighted_layer_count,
                                    bool last_layer_pad_zero) {
  const int idx = key_index(key);
  if (idx < 0 || idx >= static_cast<int>(features.size()))
    throw std::invalid_argument("missing features for the requested group");
  if (static_cast<int>(features.size()) != 2 * weighted_layer_count)
    throw std::invalid_argument("feature table size does not match the layer count");

  std::vector<double> in(13, 0.0);
  const auto own = features[static_cast<size_t>(idx)].as_array();
  for (int i = 0; i < 6; ++i) in[static_cast<size_t>(i)] = own[static_cast<size_t>(i)];

  if (key.layer_index + 1 < weighted_layer_count) {
    const GroupKey next{key.layer_index + 1, key.group};
    const auto nf = features[static_cast<size_t>(key_index(next))].as_array();
    for (int i = 0; i < 6; ++i) in[static_cast<size_t>(6 + i)] = nf[static_cast<size_t>(i)];
  } else if (!last_layer_pad_zero) {
    for (int i = 0; i < 6; ++i) in[static_cast<size_t>(6 + i)] = own[static_cast<size_t>(i)];
  }
  in[12] = 1.0;
  return in;
}

HyperDecision modulate(ControllerBank& bank, const std::vector<LayerFeatures>& features) {
  HyperDecision decision;
  decision.base = bank.base;
  const int layer_count = bank.n_controllers() / 2;

  for (int i = 0; i < bank.n_controllers(); ++i) {
    std::vector<double> vals;
    if (bank.fixed.has_value()) {
      vals = *bank.fixed;
    } else {
      const std::vector<double> in =
          assemble_inputs(features, bank.keys[static_cast<size_t>(i)], layer_count,
                          bank.last_layer_pad_zero);
      grn::GrnState& st = bank.states[static_cast<size_t>(i)];
      grn::set_inputs(st, in);
      for (int s = 0; s < bank.config.steps_per_query; ++s) bank.grn->step(st);
      const std::vector<double> raw = grn::read_raw_outputs(st);
      vals = grn::paired_outputs(raw, decoded_count(bank.base));
    }
    if (bank.base == opt::BaseKind::Sgd) {
      decision.sgd.push_back(opt::SgdHyper{vals[0], vals[1], 0.0});
    } else {
      const double eps = vals[3] == 0.0 ? 1e-12 : vals[3];
      decision.adam.push_back(opt::AdamHyper{vals[0], vals[1], vals[2], eps, 0.0});
    }
  }
  return decision;
}

OptStates make_opt_states(const nn::Network& net, opt::BaseKind base) {
  OptStates st;
  st.base = base;
  for (const auto& g : net.param_groups) {
    if (base == opt::BaseKind::Sgd)
      st.sgd.push_back(opt::make_sgd_state(g.values));
    else
      st.adam.push_back(opt::make_adam_state(g.values));
  }
  return st;
}

namespace {

void check_alignment(const nn::Network& net, const ControllerBank& bank,
                     const OptStates& states) {
  if (bank.n_controllers() != static_cast<int>(net.param_groups.size()))
    throw std::invalid_argument("controller bank does not match the network's groups");
  if (states.base != bank.base)
    throw std::invalid_argument("optimizer state base does not match the bank");
  const size_t expected = net.param_groups.size();
  if ((bank.base == opt::BaseKind::Sgd ? states.sgd.size() : states.adam.size()) != expected)
    throw std::invalid_argument("optimizer state count does not match the network");
}

}  // namespace

double neuromod_train_step(nn::Network& net, const nn::Tensor& batch,
                           const std::vector<int>& labels, nn::LossKind loss,
                           ControllerBank& bank, OptStates& states, long long iteration,
                           std::vector<TelemetryRow>* telemetry) {
  check_alignment(net, bank, states);
  auto [loss_value, grads] = nn::backward(net, batch, labels, loss);
  const std::vector<LayerFeatures> features = compute_all_features(net, grads);
  const HyperDecision decision = modulate(bank, features);

  for (size_t i = 0; i < net.param_groups.size(); ++i) {
    nn::Tensor& params = net.param_groups[i].values;
    if (bank.base == opt::BaseKind::Sgd)
      opt::sgd_step(params, states.sgd[i], grads.groups[i], decision.sgd[i]);
    else
      opt::adam_step(params, states.adam[i], grads.groups[i], decision.adam[i]);

    if (telemetry) {
      TelemetryRow row;
      row.iteration = iteration;
      row.layer_index = bank.keys[i].layer_index;
      row.group = bank.keys[i].group;
      const std::vector<double> in = assemble_inputs(
          features, bank.keys[i], net.weighted_layer_count, bank.last_layer_pad_zero);
      std::copy(in.begin(), in.end(), row.inputs.begin());
      if (bank.base == opt::BaseKind::Sgd) {
        const auto& h = decision.sgd[i];
        row.outputs = {h.eta, h.alpha};
      } else {
        const auto& h = decision.adam[i];
        row.outputs = {h.eta, h.beta1, h.beta2, h.epsilon};
      }
      telemetry->push_back(std::move(row));
    }
  }
  return loss_value;
}

double baseline_train_step(nn::Network& net, const nn::Tensor& batch,
                           const std::vector<int>& labels, nn::LossKind loss,
                           const opt::Preset& preset, OptStates& states) {
  if (states.base != preset.base)
    throw std::invalid_argument("optimizer state base does not match the preset");
  if ((preset.base == opt::BaseKind::Sgd ? states.sgd.size() : states.adam.size()) !=
      net.param_groups.size())
    throw std::invalid_argument("optimizer state count does not match the network");
  auto [loss_value, grads] = nn::backward(net, batch, labels, loss);
  for (size_t i = 0; i < net.param_groups.size(); ++i) {
    nn::Tensor& params = net.param_groups[i].values;
    if (preset.base == opt::BaseKind::Sgd)
      opt::sgd_step(params, states.sgd[i], grads.groups[i], preset.sgd);
    else
      opt::adam_step(params, states.adam[i], grads.groups[i], preset.adam);
  }
  return loss_value;
}

}  // namespace nmod::mod
