#include "speechllm/optim.h"

#include <algorithm>
#include <cmath>

#include "speechllm/error.h"

namespace speechllm {

void adamw_update(std::span<real> param, std::span<const real> grad, AdamWSlot& slot, const AdamWConfig& config,
                  bool apply_decay) {
  if (grad.size() != param.size()) throw ContractViolation("adamw_update: gradient/parameter size mismatch");
  if (slot.m.empty()) {
    slot.m.assign(param.size(), real(0));
    slot.v.assign(param.size(), real(0));
  }
  if (slot.m.size() != param.size() || slot.v.size() != param.size()) {
    throw ContractViolation("adamw_update: optimizer state does not match parameter");
  }
  slot.step += 1;
  const real b1 = static_cast<real>(config.beta1);
  const real b2 = static_cast<real>(config.beta2);
  const real lr = static_cast<real>(config.lr);
  const real eps = static_cast<real>(config.eps);
  const real wd = apply_decay ? static_cast<real>(config.weight_decay) : real(0);
  const real c1 = real(1) - static_cast<real>(std::pow(config.beta1, static_cast<double>(slot.step)));
  const real c2 = real(1) - static_cast<real>(std::pow(config.beta2, static_cast<double>(slot.step)));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const real g = grad[i];
    slot.m[i] = b1 * slot.m[i] + (real(1) - b1) * g;
    slot.v[i] = b2 * slot.v[i] + (real(1) - b2) * g * g;
    const real m_hat = slot.m[i] / c1;
    const real v_hat = slot.v[i] / c2;
    param[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * param[i]);
  }
}

void AdamW::step(ParameterStore& store) {
  for (const Parameter& p : store.parameters()) {
    if (!store.trainable(p.group)) continue;
    Tensor t = p.tensor;
    std::vector<real> zero;
    std::span<const real> g = t.grad_or_empty();
    if (g.empty()) {
      zero.assign(t.numel(), real(0));
      g = zero;
    }
    adamw_update(t.values(), g, slots_[p.name], config_, p.decay);
  }
  ++steps_;
}

void AdamW::reset() {
  slots_.clear();
  steps_ = 0;
}

const AdamWSlot* AdamW::slot(const std::string& name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? nullptr : &it->second;
}

void clip_gradients(std::span<real> grads, real limit) {
  for (real& g : grads) g = std::clamp(g, -limit, limit);
}

void clip_gradients(ParameterStore& store, real limit) {
  for (const Parameter& p : store.parameters()) {
    Tensor t = p.tensor;
    if (t.has_grad()) clip_gradients(t.grad(), limit);
  }
}

StepResult accumulate_and_step(ParameterStore& store, AdamW& optimizer, int n_accum,
                               const std::function<Tensor(int)>& micro_loss, real clip) {
  if (n_accum < 1) throw ConfigError("gradient accumulation count must be >= 1, got " + std::to_string(n_accum));
  store.zero_grad();
  double total = 0;
  for (int i = 0; i < n_accum; ++i) {
    Tensor loss = micro_loss(i);
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
      store.zero_grad();
      throw NonFiniteLossError("non-finite loss in micro-batch " + std::to_string(i));
    }
    backward(loss);
    total += value;
  }
  const real inv = real(1) / static_cast<real>(n_accum);
  for (const Parameter& p : store.parameters()) {
    Tensor t = p.tensor;
    if (!t.has_grad()) continue;
    for (real& g : t.grad()) g *= inv;
  }
  clip_gradients(store, clip);
  optimizer.step(store);
  return StepResult{total / n_accum, n_accum};
}

}  // namespace speechllm
