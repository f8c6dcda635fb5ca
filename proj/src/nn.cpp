#include "speechllm/nn.h"

#include <cmath>
#include <limits>

#include "speechllm/error.h"
#include "speechllm/ops.h"

namespace speechllm {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<real> values(shape_numel(shape));
  for (real& v : values) v = static_cast<real>(dist(rng));
  return Tensor(std::move(shape), std::move(values));
}

std::vector<real> causal_mask(int n) {
  std::vector<real> mask(static_cast<std::size_t>(n) * n, real(0));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) mask[static_cast<std::size_t>(i) * n + j] = -std::numeric_limits<real>::infinity();
  }
  return mask;
}

std::vector<real> band_mask(int n, int radius) {
  std::vector<real> mask(static_cast<std::size_t>(n) * n, real(0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (std::abs(i - j) > radius) mask[static_cast<std::size_t>(i) * n + j] = -std::numeric_limits<real>::infinity();
    }
  }
  return mask;
}

Tensor sinusoidal_positions(int n, int d) {
  std::vector<real> values(static_cast<std::size_t>(n) * d);
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / d);
      const double angle = pos * freq;
      values[static_cast<std::size_t>(pos) * d + i] = static_cast<real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor({n, d}, std::move(values));
}

Linear::Linear(ParameterStore& store, std::string name, Group group, int in, int out, Rng& rng, bool with_bias)
    : name_(std::move(name)), in_(in), out_(out) {
  weight_ = store.add(name_ + ".weight", group, normal_tensor({in, out}, 1.0 / std::sqrt(in), rng), true);
  if (with_bias) bias_ = store.add(name_ + ".bias", group, Tensor::zeros({out}), false);
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, weight_);
  if (bias_.defined()) y = add_bias(y, bias_);
  if (lora_) y = add(y, scale(matmul(matmul(x, lora_->a), lora_->b), lora_->scaling()));
  return y;
}

void Linear::attach_lora(ParameterStore& store, int rank, double alpha, Rng& rng) {
  if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
  if (lora_) throw ContractViolation("LoRA adapter already installed on " + name_);
  LoraAdapter adapter;
  adapter.target = name_;
  adapter.rank = rank;
  adapter.alpha = alpha;
  adapter.a = store.add(name_ + ".lora_a", Group::lora, normal_tensor({in_, rank}, 1.0 / std::sqrt(in_), rng), true);
  adapter.b = store.add(name_ + ".lora_b", Group::lora, Tensor::zeros({rank, out_}), true);
  lora_ = std::move(adapter);
}

void Linear::merge_lora(ParameterStore& store) {
  if (!lora_) throw ContractViolation("no LoRA adapter to merge on " + name_);
  NoGradGuard guard;
  Tensor delta = scale(matmul(lora_->a, lora_->b), lora_->scaling());
  auto w = weight_.values();
  auto d = delta.values();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += d[i];
  store.remove(name_ + ".lora_a");
  store.remove(name_ + ".lora_b");
  lora_.reset();
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, Group group, int dim) {
  gain_ = store.add(name + ".gain", group, Tensor::full({dim}, real(1)), false);
  bias_ = store.add(name + ".bias", group, Tensor::zeros({dim}), false);
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, Group group, int dim, int hidden, Rng& rng)
    : up_(store, name + ".up", group, dim, hidden, rng), down_(store, name + ".down", group, hidden, dim, rng) {}

Tensor FeedForward::forward(const Tensor& x) const { return down_.forward(gelu(up_.forward(x))); }

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, Group group, int dim,
                                       int heads, Rng& rng)
    : heads_(heads),
      q_(store, name + ".q", group, dim, dim, rng),
      k_(store, name + ".k", group, dim, dim, rng),
      v_(store, name + ".v", group, dim, dim, rng),
      o_(store, name + ".o", group, dim, dim, rng) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

Tensor MultiHeadAttention::forward(const Tensor& queries, const Tensor& keys_values, std::span<const real> mask) const {
  const Tensor q = q_.forward(queries);
  const Tensor k = k_.forward(keys_values);
  const Tensor v = v_.forward(keys_values);
  const int dim = q.cols();
  const int head_dim = dim / heads_;
  const real inv_sqrt = real(1) / std::sqrt(static_cast<real>(head_dim));
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(q.rows()) * k.rows()) {
    throw ContractViolation("attention mask size does not match query/key lengths");
  }
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    const int b = h * head_dim, e = b + head_dim;
    Tensor scores = scale(matmul_nt(slice_cols(q, b, e), slice_cols(k, b, e)), inv_sqrt);
    if (!mask.empty()) scores = add_constant(scores, mask);
    heads.push_back(matmul(softmax_rows(scores), slice_cols(v, b, e)));
  }
  Tensor merged = heads_ == 1 ? heads.front() : concat_cols(heads);
  return o_.forward(merged);
}

Tensor MultiHeadAttention::forward_incremental(const Tensor& x, Tensor& key_cache, Tensor& value_cache) const {
  const Tensor q = q_.forward(x);
  Tensor k = k_.forward(x);
  Tensor v = v_.forward(x);
  if (key_cache.defined()) {
    const Tensor kp[] = {key_cache, k};
    const Tensor vp[] = {value_cache, v};
    k = concat_rows(kp);
    v = concat_rows(vp);
  }
  key_cache = k;
  value_cache = v;

  const int n = q.rows(), m = k.rows(), offset = m - n;
  std::vector<real> mask(static_cast<std::size_t>(n) * m, real(0));
  for (int i = 0; i < n; ++i) {
    for (int j = offset + i + 1; j < m; ++j) mask[static_cast<std::size_t>(i) * m + j] = -std::numeric_limits<real>::infinity();
  }
  const int head_dim = q.cols() / heads_;
  const real inv_sqrt = real(1) / std::sqrt(static_cast<real>(head_dim));
  std::vector<Tensor> heads;
  for (int h = 0; h < heads_; ++h) {
    const int b = h * head_dim, e = b + head_dim;
    Tensor scores = add_constant(scale(matmul_nt(slice_cols(q, b, e), slice_cols(k, b, e)), inv_sqrt), mask);
    heads.push_back(matmul(softmax_rows(scores), slice_cols(v, b, e)));
  }
  return o_.forward(heads_ == 1 ? heads.front() : concat_cols(heads));
}

TransformerBlock::TransformerBlock(ParameterStore& store, const std::string& name, Group group, int dim, int heads,
                                   int ffn_hidden, Rng& rng)
    : ln1_(store, name + ".ln1", group, dim),
      ln2_(store, name + ".ln2", group, dim),
      attn_(store, name + ".attn", group, dim, heads, rng),
      ffn_(store, name + ".ffn", group, dim, ffn_hidden, rng) {}

Tensor TransformerBlock::forward(const Tensor& x, std::span<const real> mask) const {
  const Tensor h = ln1_.forward(x);
  Tensor y = add(x, attn_.forward(h, h, mask));
  return add(y, ffn_.forward(ln2_.forward(y)));
}

}  // namespace speechllm

namespace speechllm {

Tensor TransformerBlock::forward_incremental(const Tensor& x, Tensor& key_cache, Tensor& value_cache) const {
  Tensor y = add(x, attn_.forward_incremental(ln1_.forward(x), key_cache, value_cache));
  return add(y, ffn_.forward(ln2_.forward(y)));
}

}  // namespace speechllm
