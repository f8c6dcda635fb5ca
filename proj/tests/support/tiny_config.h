#pragma once

#include <string>

namespace speechllm::testing {

// A run configuration small enough to train in seconds through the CLI.
inline std::string tiny_run_yaml(int n_utts = 40) {
  return R"(seed: 5
corpus:
  n_utts: )" + std::to_string(n_utts) +
         R"(
  alphabet: abcd
  feature_dim: 8
  min_symbols: 2
  max_symbols: 4
  dialects:
    - {tag: standard, noise: 0.05}
    - {tag: accent, rotation_seed: 9, noise: 0.1}
    - {tag: dialect, rotation_seed: 10, noise: 0.1, substitutions: "ab,ba"}
data:
  eval_limit: 4
model:
  encoder: {dim: 16, layers: 1, heads: 2, window: 4, ffn_mult: 2}
  projector: {num_queries: 8, layers: 1, heads: 2}
  llm: {dim: 16, layers: 1, heads: 2, ffn_mult: 2, max_positions: 64}
  lora: {rank: 4, alpha: 8}
  prompt: dab
  symbols: abcd
  max_decode_len: 8
pretrain:
  llm_steps: 2
training:
  accumulation: 2
  steps: {1: 2, 2: 2, 3: 2, 4: 2}
)";
}

}  // namespace speechllm::testing
