#include "speechllm/projector.h"

#include <string>

#include "speechllm/error.h"
#include "speechllm/ops.h"

namespace speechllm {

namespace {

int stacked_length(int frames, int k) {
  if (frames < k) {
    throw EmptyOutputError("projector needs at least " + std::to_string(k) + " encoder frames, got " +
                           std::to_string(frames));
  }
  return frames / k;
}

// [T', D] -> [floor(T'/k), k*D]: consecutive groups of k frames side by side.
Tensor stack_frames(const Tensor& frames, int k) {
  const int groups = stacked_length(frames.rows(), k);
  const Tensor kept = groups * k == frames.rows() ? frames : slice_rows(frames, 0, groups * k);
  return k == 1 ? kept : reshape(kept, {groups, k * frames.cols()});
}

}  // namespace

std::string_view projector_kind_name(ProjectorKind kind) {
  switch (kind) {
    case ProjectorKind::linear: return "linear";
    case ProjectorKind::conv1d: return "conv1d";
    case ProjectorKind::transformer: return "transformer";
    case ProjectorKind::qformer: return "qformer";
  }
  return "?";
}

ProjectorKind parse_projector_kind(std::string_view name) {
  for (ProjectorKind k : {ProjectorKind::linear, ProjectorKind::conv1d, ProjectorKind::transformer,
                          ProjectorKind::qformer}) {
    if (projector_kind_name(k) == name) return k;
  }
  throw ConfigError("unknown projector kind '" + std::string(name) + "'");
}

void ProjectorConfig::validate() const {
  if (kind != ProjectorKind::qformer && downsample != 1 && downsample != 2 && downsample != 4 && downsample != 8) {
    throw ConfigError("projector downsample must be one of 1, 2, 4, 8; got " + std::to_string(downsample));
  }
  if (num_queries < 1) throw ConfigError("Q-Former needs at least one query");
  if (layers < 0 || heads < 1 || ffn_mult < 1) throw ConfigError("bad projector block configuration");
}

LinearProjector::LinearProjector(ParameterStore& store, int dim, int k, Rng& rng)
    : k_(k), dense_(store, "projector.dense", Group::projector, k * dim, dim, rng) {}

Tensor LinearProjector::forward(const Tensor& frames) const { return gelu(dense_.forward(stack_frames(frames, k_))); }

int LinearProjector::output_length(int frames) const { return stacked_length(frames, k_); }

Conv1dProjector::Conv1dProjector(ParameterStore& store, int dim, int k, Rng& rng)
    : k_(k), conv_(store, "projector.conv", Group::projector, (2 * k - 1) * dim, dim, rng) {}

Tensor Conv1dProjector::forward(const Tensor& frames) const {
  const int length = output_length(frames.rows());
  return gelu(conv_.forward(unfold_frames(frames, kernel(), k_, padding(), length)));
}

int Conv1dProjector::output_length(int frames) const { return stacked_length(frames, k_); }

TransformerProjector::TransformerProjector(ParameterStore& store, int dim, const ProjectorConfig& config, Rng& rng)
    : k_(config.downsample),
      stack_(store, "projector.stack", Group::projector, config.downsample * dim, dim, rng),
      norm_(store, "projector.norm", Group::projector, dim) {
  for (int i = 0; i < config.layers; ++i) {
    blocks_.emplace_back(store, "projector.block" + std::to_string(i), Group::projector, dim, config.heads,
                         config.ffn_mult * dim, rng);
  }
}

Tensor TransformerProjector::forward(const Tensor& frames) const {
  Tensor x = stack_.forward(stack_frames(frames, k_));
  x = add(x, sinusoidal_positions(x.rows(), x.cols()));
  for (const TransformerBlock& block : blocks_) x = block.forward(x);
  return norm_.forward(x);
}

int TransformerProjector::output_length(int frames) const { return stacked_length(frames, k_); }

QFormerProjector::QFormerProjector(ParameterStore& store, int dim, const ProjectorConfig& config, Rng& rng)
    : positions_(config.qformer_positions), norm_(store, "projector.norm", Group::projector, dim) {
  queries_ = store.add("projector.queries", Group::projector, normal_tensor({config.num_queries, dim}, 1.0, rng), true);
  for (int i = 0; i < config.layers; ++i) {
    const std::string name = "projector.block" + std::to_string(i);
    blocks_.push_back(Block{LayerNorm(store, name + ".ln_self", Group::projector, dim),
                            LayerNorm(store, name + ".ln_cross", Group::projector, dim),
                            LayerNorm(store, name + ".ln_kv", Group::projector, dim),
                            LayerNorm(store, name + ".ln_ffn", Group::projector, dim),
                            MultiHeadAttention(store, name + ".self_attn", Group::projector, dim, config.heads, rng),
                            MultiHeadAttention(store, name + ".cross_attn", Group::projector, dim, config.heads, rng),
                            FeedForward(store, name + ".ffn", Group::projector, dim, config.ffn_mult * dim, rng)});
  }
}

Tensor QFormerProjector::forward(const Tensor& frames) const {
  output_length(frames.rows());
  Tensor keys = frames;
  if (positions_) keys = add(keys, sinusoidal_positions(frames.rows(), frames.cols()));
  Tensor q = queries_;
  for (const Block& b : blocks_) {
    const Tensor hs = b.ln_self.forward(q);
    q = add(q, b.self_attn.forward(hs, hs));
    q = add(q, b.cross_attn.forward(b.ln_cross.forward(q), b.ln_kv.forward(keys)));
    q = add(q, b.ffn.forward(b.ln_ffn.forward(q)));
  }
  return norm_.forward(q);
}

int QFormerProjector::output_length(int frames) const {
  if (frames < 1) throw EmptyOutputError("Q-Former needs at least one encoder frame");
  return queries_.rows();
}

std::unique_ptr<Projector> make_projector(ParameterStore& store, int dim, const ProjectorConfig& config, Rng& rng) {
  config.validate();
  switch (config.kind) {
    case ProjectorKind::linear: return std::make_unique<LinearProjector>(store, dim, config.downsample, rng);
    case ProjectorKind::conv1d: return std::make_unique<Conv1dProjector>(store, dim, config.downsample, rng);
    case ProjectorKind::transformer: return std::make_unique<TransformerProjector>(store, dim, config, rng);
    case ProjectorKind::qformer: return std::make_unique<QFormerProjector>(store, dim, config, rng);
  }
  throw ConfigError("unhandled projector kind");
}

LlmBridge::LlmBridge(ParameterStore& store, int in, int d_llm, Rng& rng)
    : linear_(store, "llm_bridge.linear", Group::llm_bridge, in, d_llm, rng) {}

Tensor LlmBridge::to_llm_space(const Tensor& projected) const {
  if (projected.rank() != 2 || projected.cols() != linear_.in_features()) {
    throw ContractViolation("bridge expects width " + std::to_string(linear_.in_features()) + ", got " +
                            shape_string(projected.shape()));
  }
  return linear_.forward(projected);
}

SpeechEmbedding project(const Projector& projector, const LlmBridge& bridge, const EncoderOutput& encoded) {
  return SpeechEmbedding{bridge.to_llm_space(projector.forward(encoded.frames)),
                         projector.output_rate(encoded.frame_rate_hz)};
}

}  // namespace speechllm
