#include "nmod/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace nmod::opt {

namespace {

void check_shapes(const nn::Tensor& params, const nn::Tensor& state_tensor,
                  const nn::Tensor& grads) {
  if (params.shape != grads.shape)
    throw std::invalid_argument("gradient shape does not match the parameters");
  if (params.shape != state_tensor.shape)
    throw std::invalid_argument("optimizer state shape does not match the parameters");
}

}  // namespace

std::vector<std::string> validate_hyper(const SgdHyper& h) {
  std::vector<std::string> out;
  if (!(h.eta >= 0.0)) out.push_back("eta must be >= 0");
  if (!(h.alpha >= 0.0 && h.alpha <= 1.0)) out.push_back("alpha must lie in [0, 1]");
  if (!(h.decay >= 0.0)) out.push_back("decay must be >= 0");
  return out;
}

std::vector<std::string> validate_hyper(const AdamHyper& h) {
  std::vector<std::string> out;
  if (!(h.eta >= 0.0)) out.push_back("eta must be >= 0");
  if (!(h.beta1 >= 0.0 && h.beta1 < 1.0)) out.push_back("beta1 must lie in [0, 1)");
  if (!(h.beta2 >= 0.0 && h.beta2 < 1.0)) out.push_back("beta2 must lie in [0, 1)");
  if (!(h.epsilon > 0.0)) out.push_back("epsilon must be > 0");
  if (!(h.decay >= 0.0)) out.push_back("decay must be >= 0");
  return out;
}

SgdState make_sgd_state(const nn::Tensor& params) {
  SgdState s;
  s.velocity = nn::Tensor(params.shape);
  return s;
}

AdamState make_adam_state(const nn::Tensor& params) {
  AdamState s;
  s.m = nn::Tensor(params.shape);
  s.v = nn::Tensor(params.shape);
  return s;
}

double decayed_eta(double eta, double decay, long long t) {
  return eta / (1.0 + decay * static_cast<double>(t));
}

void sgd_step(nn::Tensor& params, SgdState& state, const nn::Tensor& grads,
              const SgdHyper& hyper) {
  check_shapes(params, state.velocity, grads);
  const double eta_t = decayed_eta(hyper.eta, hyper.decay, state.step_count);
  for (int i = 0; i < params.size(); ++i) {
    state.velocity[i] = hyper.alpha * state.velocity[i] - eta_t * grads[i];
    params[i] += state.velocity[i];
  }
  state.step_count += 1;
}

void adam_step(nn::Tensor& params, AdamState& state, const nn::Tensor& grads,
               const AdamHyper& hyper) {
  check_shapes(params, state.m, grads);
  check_shapes(params, state.v, grads);
  const double eta_t = decayed_eta(hyper.eta, hyper.decay, state.step_count);
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (int i = 0; i < params.size(); ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= eta_t * mhat / (std::sqrt(vhat) + hyper.epsilon);
  }
}

Preset baseline_preset(PresetMethod method, int model_id) {
  if (model_id < 0 || model_id > 2)
    throw std::invalid_argument("unknown model id for baseline preset: " +
                                std::to_string(model_id));
  Preset p;
  switch (method) {
    case PresetMethod::Sgd:
      p.base = BaseKind::Sgd;
      p.sgd = SgdHyper{0.01, 0.0, 0.0};
      return p;
    case PresetMethod::SgdTuned:
      p.base = BaseKind::Sgd;
      if (model_id == 0)
        p.sgd = SgdHyper{0.01, 0.75, 0.0};
      else if (model_id == 1)
        p.sgd = SgdHyper{0.1, 0.0, 0.001};
      else
        p.sgd = SgdHyper{0.01, 0.5, 0.0};
      return p;
    case PresetMethod::Adam:
      p.base = BaseKind::Adam;
      p.adam = AdamHyper{0.001, 0.9, 0.999, 1e-8, 0.0};
      return p;
    case PresetMethod::AdamTuned:
      p.base = BaseKind::Adam;
      if (model_id == 0)
        p.adam = AdamHyper{0.001, 0.9, 0.999, 0.001, 0.0};
      else if (model_id == 1)
        p.adam = AdamHyper{0.1, 0.99, 0.9, 1.0, 0.001};
      else
        p.adam = AdamHyper{0.1, 0.99, 0.999, 1.0, 0.001};
      return p;
  }
  throw std::invalid_argument("unknown baseline preset method");
}

}  // namespace nmod::opt
