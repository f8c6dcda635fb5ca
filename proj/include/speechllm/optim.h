#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "speechllm/params.h"

namespace speechllm {

// Defaults are the reference finetuning hyperparameters; toy runs override lr.
struct AdamWConfig {
  double lr = 1.0e-5;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1.0e-6;
  double weight_decay = 0.01;
};

struct AdamWSlot {
  std::vector<real> m;
  std::vector<real> v;
  long step = 0;
};

// One bias-corrected AdamW update with decoupled weight decay:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
void adamw_update(std::span<real> param, std::span<const real> grad, AdamWSlot& slot, const AdamWConfig& config,
                  bool apply_decay);

class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Updates every parameter whose group is trainable. Frozen parameters are
  // neither moved nor decayed.
  void step(ParameterStore& store);
  void reset();

  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  long steps() const { return steps_; }
  const AdamWSlot* slot(const std::string& name) const;

 private:
  AdamWConfig config_;
  std::map<std::string, AdamWSlot> slots_;
  long steps_ = 0;
};

inline constexpr real kDefaultClipValue = real(5);

// Element-wise value clipping to [-limit, limit].
void clip_gradients(std::span<real> grads, real limit = kDefaultClipValue);
void clip_gradients(ParameterStore& store, real limit = kDefaultClipValue);

struct StepResult {
  double mean_loss = 0;
  int micro_batches = 0;
};

// Runs n_accum micro-batches through backward, averages the summed leaf
// gradients, clips them, and applies exactly one optimizer step. Throws
// ConfigError for n_accum < 1 and NonFiniteLossError (before any update)
// when a micro-batch loss is not finite.
StepResult accumulate_and_step(ParameterStore& store, AdamW& optimizer, int n_accum,
                               const std::function<Tensor(int)>& micro_loss, real clip = kDefaultClipValue);

}  // namespace speechllm
