#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "speechllm/encoder.h"
#include "speechllm/nn.h"

namespace speechllm {

enum class ProjectorKind { linear, conv1d, transformer, qformer };

std::string_view projector_kind_name(ProjectorKind kind);
ProjectorKind parse_projector_kind(std::string_view name);  // ConfigError if unknown

inline constexpr int kDefaultQueries = 64;

struct ProjectorConfig {
  ProjectorKind kind = ProjectorKind::linear;
  int downsample = 4;  // one of 1, 2, 4, 8; ignored by qformer
  int num_queries = kDefaultQueries;
  int layers = 2;      // transformer / qformer blocks
  int heads = 4;
  int ffn_mult = 2;
  bool qformer_positions = true;  // sinusoidal positions on the Q-Former keys

  void validate() const;
};

// LLM-width speech embeddings. frame_rate_hz is absent for the Q-Former,
// whose output length does not depend on duration.
struct SpeechEmbedding {
  Tensor vectors;  // [L, d_llm]
  std::optional<double> frame_rate_hz;
  int length() const { return vectors.rows(); }
};

// Maps encoder frames [T', D_enc] to [L, D_enc]; width is preserved and the
// move into LLM space is done by LlmBridge.
class Projector {
 public:
  virtual ~Projector() = default;
  virtual Tensor forward(const Tensor& frames) const = 0;
  // L for T' input frames; throws EmptyOutputError when no output is possible.
  virtual int output_length(int frames) const = 0;
  virtual std::optional<double> output_rate(double input_rate_hz) const = 0;
  virtual ProjectorKind kind() const = 0;
};

// Stack k frames feature-wise, dense layer + GELU. Remainder frames dropped.
class LinearProjector final : public Projector {
 public:
  LinearProjector(ParameterStore& store, int dim, int k, Rng& rng);
  Tensor forward(const Tensor& frames) const override;
  int output_length(int frames) const override;
  std::optional<double> output_rate(double input_rate_hz) const override { return input_rate_hz / k_; }
  ProjectorKind kind() const override { return ProjectorKind::linear; }

 private:
  int k_;
  Linear dense_;
};

// Temporal convolution, kernel 2k-1, stride k, symmetric zero padding k/2,
// output truncated to floor(T'/k), then GELU.
class Conv1dProjector final : public Projector {
 public:
  Conv1dProjector(ParameterStore& store, int dim, int k, Rng& rng);
  Tensor forward(const Tensor& frames) const override;
  int output_length(int frames) const override;
  std::optional<double> output_rate(double input_rate_hz) const override { return input_rate_hz / k_; }
  ProjectorKind kind() const override { return ProjectorKind::conv1d; }
  int kernel() const { return 2 * k_ - 1; }
  int padding() const { return k_ / 2; }

 private:
  int k_;
  Linear conv_;
};

// Frame stacking as in LinearProjector, then self-attention blocks over the
// downsampled sequence (sinusoidal positions added before the first block).
class TransformerProjector final : public Projector {
 public:
  TransformerProjector(ParameterStore& store, int dim, const ProjectorConfig& config, Rng& rng);
  Tensor forward(const Tensor& frames) const override;
  int output_length(int frames) const override;
  std::optional<double> output_rate(double input_rate_hz) const override { return input_rate_hz / k_; }
  ProjectorKind kind() const override { return ProjectorKind::transformer; }

 private:
  int k_;
  Linear stack_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm norm_;
};

// Learned queries: each block runs query self-attention, cross-attention
// into the encoder frames, and a feed-forward layer.
class QFormerProjector final : public Projector {
 public:
  QFormerProjector(ParameterStore& store, int dim, const ProjectorConfig& config, Rng& rng);
  Tensor forward(const Tensor& frames) const override;
  int output_length(int frames) const override;
  std::optional<double> output_rate(double) const override { return std::nullopt; }
  ProjectorKind kind() const override { return ProjectorKind::qformer; }
  int num_queries() const { return queries_.rows(); }

 private:
  struct Block {
    LayerNorm ln_self, ln_cross, ln_kv, ln_ffn;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ffn;
  };
  bool positions_;
  Tensor queries_;  // [num_queries, dim]
  std::vector<Block> blocks_;
  LayerNorm norm_;
};

std::unique_ptr<Projector> make_projector(ParameterStore& store, int dim, const ProjectorConfig& config, Rng& rng);

// Affine map from projector width to the LLM embedding width (group
// llm_bridge).
class LlmBridge {
 public:
  LlmBridge(ParameterStore& store, int in, int d_llm, Rng& rng);
  // Throws ContractViolation when the input width is not `in`.
  Tensor to_llm_space(const Tensor& projected) const;
  Linear& linear() { return linear_; }
  int d_llm() const { return linear_.out_features(); }

 private:
  Linear linear_;
};

// Projector followed by the bridge, with the frame-rate bookkeeping.
SpeechEmbedding project(const Projector& projector, const LlmBridge& bridge, const EncoderOutput& encoded);

}  // namespace speechllm
