#pragma once

#include <span>
#include <string_view>
#include <string>
#include <vector>

#include "speechllm/nn.h"
#include "speechllm/vocab.h"

namespace speechllm {

enum class Segment { prompt, speech, transcript };

// absolute: one position index over the whole sequence. segment: the index
// restarts in every segment and a learned segment-type vector is added.
enum class PositionMode { absolute, segment };
std::string_view position_mode_name(PositionMode mode);
PositionMode parse_position_mode(std::string_view name);

struct LlmConfig {
  int vocab_size = 0;
  int dim = 128;
  int layers = 4;
  int heads = 4;
  int ffn_mult = 4;
  int max_positions = 256;  // per sequence (absolute) or per segment (segment)
  PositionMode positions = PositionMode::segment;
};

struct LoraConfig {
  int rank = 12;
  double alpha = 32.0;
  std::vector<std::string> targets = {"q", "v"};  // attention projections
};

// Decoder-only transformer: token and learned position embeddings, pre-norm
// causal blocks, final norm, untied output head. Everything lives in group
// llm_body; adapters go to group lora.
class LanguageModel {
 public:
  LanguageModel(ParameterStore& store, const LlmConfig& config, Rng& rng);

  Tensor embed(std::span<const int> ids) const { return embedding(token_embedding_, ids); }
  // Causal logits [n, V] for an embedded sequence [n, d] with one segment
  // label per row.
  Tensor logits(const Tensor& embeddings, std::span<const Segment> segments) const;
  // Logits of the final position only, [1, V].
  Tensor last_logits(const Tensor& embeddings, std::span<const Segment> segments) const;

  // Per-layer key/value cache for incremental greedy decoding.
  struct DecodeCache {
    std::vector<Tensor> keys, values;
    int length = 0;
    Segment segment = Segment::prompt;  // segment of the last cached row
    int segment_length = 0;             // rows cached in that segment
  };
  // Appends rows to the cached prefix and returns the logits of the last new
  // row, [1, V]. Same result as last_logits on the whole prefix, up to
  // rounding.
  Tensor extend(const Tensor& embeddings, std::span<const Segment> segments, DecodeCache& cache) const;

  // Installs adapters on every block's named attention projections. Throws
  // ConfigError for an unknown target or rank < 1.
  void apply_lora(ParameterStore& store, const LoraConfig& config, Rng& rng);
  // Folds adapters into the base weights. Throws ContractViolation if none
  // are installed.
  void merge_lora(ParameterStore& store);
  bool has_lora() const;

  const LlmConfig& config() const { return config_; }

 private:
  Tensor hidden(const Tensor& embeddings, std::span<const Segment> segments) const;
  // Adds position (and segment) vectors; the prefix state continues a cache.
  Tensor add_positions(const Tensor& embeddings, std::span<const Segment> segments, int offset, Segment previous,
                       int previous_run) const;
  Linear& target(std::size_t block, const std::string& name);

  LlmConfig config_;
  Tensor token_embedding_;     // [V, d]
  Tensor position_embedding_;  // [max_positions, d]
  Tensor segment_embedding_;   // [3, d], segment mode only
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
  Linear head_;
};

// prompt ⊕ speech ⊕ transcript. loss_mask[p] marks positions whose next-token
// prediction is scored; targets[p] is that next token (transcript ids, then
// EOS), -1 elsewhere.
struct RegulatedSequence {
  Tensor embeddings;
  std::vector<bool> loss_mask;
  std::vector<int> targets;
  std::vector<Segment> segments;
  int length() const { return embeddings.rows(); }
  int scored() const;
};

// Inference form: no transcript, empty mask.
RegulatedSequence regulate(const Tensor& prompt, const Tensor& speech);
// Training form: transcript embeddings plus their ids for the targets.
RegulatedSequence regulate(const Tensor& prompt, const Tensor& speech, const Tensor& transcript,
                           std::span<const int> transcript_ids);

// Mean next-token cross-entropy over the scored positions. Throws
// UndefinedLossError when nothing is scored.
Tensor forward_loss(const LanguageModel& model, const RegulatedSequence& sequence);

// Greedy decoding from prompt ⊕ speech until EOS or max_len tokens.
TokenSequence generate(const LanguageModel& model, const Tensor& prompt, const Tensor& speech, int max_len);

}  // namespace speechllm
