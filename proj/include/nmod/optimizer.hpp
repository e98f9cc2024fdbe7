#pragma once

#include <string>
#include <vector>

#include "nmod/tensor.hpp"

namespace nmod::opt {

struct SgdHyper {
  double eta = 0.01;    // learning rate
  double alpha = 0.0;   // momentum
  double decay = 0.0;   // per-update learning-rate decay
};

struct AdamHyper {
  double eta = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay = 0.0;
};

std::vector<std::string> validate_hyper(const SgdHyper& h);
std::vector<std::string> validate_hyper(const AdamHyper& h);

struct SgdState {
  nn::Tensor velocity;
  long long step_count = 0;
};

struct AdamState {
  nn::Tensor m;
  nn::Tensor v;
  long long step_count = 0;
};

SgdState make_sgd_state(const nn::Tensor& params);
AdamState make_adam_state(const nn::Tensor& params);

// effective learning rate after t prior updates: eta / (1 + decay * t)
double decayed_eta(double eta, double decay, long long t);

// velocity <- alpha * velocity - eta_t * grad; params += velocity; then t += 1.
// eta_t uses the pre-update step count.
void sgd_step(nn::Tensor& params, SgdState& state, const nn::Tensor& grads,
              const SgdHyper& hyper);

// standard bias-corrected update; eta_t uses the pre-update step count while
// the bias corrections use the incremented one. State persists across
// hyperparameter changes, so hyper may differ on every call.
void adam_step(nn::Tensor& params, AdamState& state, const nn::Tensor& grads,
               const AdamHyper& hyper);

enum class BaseKind { Sgd, Adam };

enum class PresetMethod { Sgd, SgdTuned, Adam, AdamTuned };

struct Preset {
  BaseKind base = BaseKind::Sgd;
  SgdHyper sgd;
  AdamHyper adam;
};

// published per-model baseline hyperparameters; model_id in {0, 1, 2}.
// The untuned presets are model-independent framework defaults.
Preset baseline_preset(PresetMethod method, int model_id);

}  // namespace nmod::opt
