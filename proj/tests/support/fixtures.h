#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "speechllm/corpus.h"
#include "speechllm/model.h"
#include "speechllm/tensor.h"

namespace speechllm::testing {

// A model small enough for unit tests: 4-symbol alphabet, 8-dim features.
inline ModelConfig tiny_model_config(ProjectorKind kind = ProjectorKind::linear, int k = 4) {
  ModelConfig c;
  c.encoder = {.input_dim = 8, .dim = 16, .layers = 1, .heads = 2, .window = 4, .ffn_mult = 2};
  c.projector.kind = kind;
  c.projector.downsample = k;
  c.projector.num_queries = 8;
  c.projector.layers = 1;
  c.projector.heads = 2;
  c.llm.dim = 16;
  c.llm.layers = 2;
  c.llm.heads = 2;
  c.llm.ffn_mult = 2;
  c.llm.max_positions = 64;
  c.lora.rank = 4;
  c.lora.alpha = 8;
  c.symbols = "abcd";
  c.prompt = "dab";
  c.max_decode_len = 12;
  return c;
}

inline CorpusConfig tiny_corpus_config(int n_utts = 24, std::uint64_t seed = 3) {
  CorpusConfig c;
  c.seed = seed;
  c.n_utts = n_utts;
  c.alphabet = "abcd";
  c.feature_dim = 8;
  c.min_symbols = 2;
  c.max_symbols = 4;
  c.dialects = {{.tag = "standard", .rotation_seed = std::nullopt, .noise = 0.05, .substitutions = {}},
                {.tag = "accent", .rotation_seed = 11, .noise = 0.1, .substitutions = {}}};
  return c;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<real> values(shape_numel(shape));
  for (real& v : values) v = static_cast<real>(dist(rng));
  return Tensor(std::move(shape), std::move(values));
}

inline std::vector<double> to_doubles(std::span<const real> values) {
  return std::vector<double>(values.begin(), values.end());
}

}  // namespace speechllm::testing
