#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "speechllm/ops.h"
#include "speechllm/params.h"

namespace speechllm {

using Rng = std::mt19937_64;

Tensor normal_tensor(Shape shape, double stddev, Rng& rng);

// Additive attention masks (0 = visible, -inf = hidden), rows = queries.
std::vector<real> causal_mask(int n);
// Bidirectional band: |i - j| <= radius.
std::vector<real> band_mask(int n, int radius);

// [n, d] sinusoidal position table (sin on even columns, cos on odd).
Tensor sinusoidal_positions(int n, int d);

// Low-rank delta on a frozen weight: W_eff = W + (alpha / rank) * A * B.
struct LoraAdapter {
  std::string target;
  Tensor a;  // [in, rank], random init
  Tensor b;  // [rank, out], zero init
  int rank = 0;
  double alpha = 0;
  real scaling() const { return static_cast<real>(alpha / rank); }
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, std::string name, Group group, int in, int out, Rng& rng, bool with_bias = true);

  Tensor forward(const Tensor& x) const;

  void attach_lora(ParameterStore& store, int rank, double alpha, Rng& rng);
  // Folds the adapter into the base weight and unregisters A and B.
  void merge_lora(ParameterStore& store);
  bool has_lora() const { return lora_.has_value(); }
  const std::optional<LoraAdapter>& lora() const { return lora_; }

  const std::string& name() const { return name_; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  std::string name_;
  int in_ = 0;
  int out_ = 0;
  Tensor weight_;  // [in, out]
  Tensor bias_;    // [out] or undefined
  std::optional<LoraAdapter> lora_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, Group group, int dim);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gain_, bias_); }

 private:
  Tensor gain_;
  Tensor bias_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, Group group, int dim, int hidden, Rng& rng);
  Tensor forward(const Tensor& x) const;

 private:
  Linear up_;
  Linear down_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, Group group, int dim, int heads, Rng& rng);

  // queries [n, d] attend to keys/values [m, d]; mask is n*m additive or empty.
  Tensor forward(const Tensor& queries, const Tensor& keys_values, std::span<const real> mask = {}) const;
  // Causal self-attention for new rows appended after the cached ones. The
  // caches hold projected keys/values and grow by x.rows(). Inference only.
  Tensor forward_incremental(const Tensor& x, Tensor& key_cache, Tensor& value_cache) const;

  Linear& query() { return q_; }
  Linear& key() { return k_; }
  Linear& value() { return v_; }
  Linear& output() { return o_; }

 private:
  int heads_ = 1;
  Linear q_, k_, v_, o_;
};

// Pre-norm self-attention block: x += attn(ln(x)); x += ffn(ln(x)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore& store, const std::string& name, Group group, int dim, int heads, int ffn_hidden,
                   Rng& rng);
  Tensor forward(const Tensor& x, std::span<const real> mask = {}) const;
  Tensor forward_incremental(const Tensor& x, Tensor& key_cache, Tensor& value_cache) const;
  MultiHeadAttention& attention() { return attn_; }

 private:
  LayerNorm ln1_, ln2_;
  MultiHeadAttention attn_;
  FeedForward ffn_;
};

}  // namespace speechllm
