#include "speechllm/llm.h"

#include <algorithm>
#include <cmath>

#include "speechllm/error.h"
#include "speechllm/ops.h"

namespace speechllm {

namespace {
constexpr double kHeadInitStd = 0.02;
}  // namespace


LanguageModel::LanguageModel(ParameterStore& store, const LlmConfig& config, Rng& rng)
    : config_(config), final_norm_(store, "llm.norm", Group::llm_body, config.dim) {
  if (config.vocab_size <= kNumSpecialTokens) throw ConfigError("LLM vocabulary too small");
  if (config.max_positions < 1) throw ConfigError("LLM max_positions must be positive");
  token_embedding_ =
      store.add("llm.token_embedding", Group::llm_body, normal_tensor({config.vocab_size, config.dim}, 1.0, rng), true);
  position_embedding_ = store.add("llm.position_embedding", Group::llm_body,
                                  normal_tensor({config.max_positions, config.dim}, 1.0, rng), true);
  if (config.positions == PositionMode::segment) {
    segment_embedding_ =
        store.add("llm.segment_embedding", Group::llm_body, normal_tensor({3, config.dim}, 1.0, rng), true);
  }
  for (int i = 0; i < config.layers; ++i) {
    blocks_.emplace_back(store, "llm.block" + std::to_string(i), Group::llm_body, config.dim, config.heads,
                         config.ffn_mult * config.dim, rng);
  }
  head_ = Linear(store, "llm.head", Group::llm_body, config.dim, config.vocab_size, rng, false);
  // Small output weights so an untrained model predicts close to uniformly.
  Tensor head_weight = head_.weight();
  const real shrink = static_cast<real>(kHeadInitStd * std::sqrt(static_cast<double>(config.dim)));
  for (real& w : head_weight.values()) w *= shrink;
}

std::string_view position_mode_name(PositionMode mode) {
  return mode == PositionMode::absolute ? "absolute" : "segment";
}

PositionMode parse_position_mode(std::string_view name) {
  if (name == "absolute") return PositionMode::absolute;
  if (name == "segment") return PositionMode::segment;
  throw ConfigError("unknown position mode '" + std::string(name) + "' (expected absolute or segment)");
}

Tensor LanguageModel::add_positions(const Tensor& embeddings, std::span<const Segment> segments, int offset,
                                    Segment previous, int previous_run) const {
  const int n = embeddings.rows();
  if (embeddings.cols() != config_.dim) {
    throw ContractViolation("LLM expects width " + std::to_string(config_.dim) + ", got " +
                            shape_string(embeddings.shape()));
  }
  if (static_cast<int>(segments.size()) != n) throw ContractViolation("LLM needs one segment label per row");
  std::vector<int> positions(static_cast<std::size_t>(n));
  std::vector<int> kinds(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Segment seg = segments[static_cast<std::size_t>(i)];
    if (seg < previous && (offset > 0 || i > 0)) throw ContractViolation("LLM segments out of order");
    previous_run = (offset + i > 0 && seg == previous) ? previous_run + 1 : 1;
    previous = seg;
    const int pos = config_.positions == PositionMode::segment ? previous_run - 1 : offset + i;
    if (pos >= config_.max_positions) {
      throw ContractViolation("position " + std::to_string(pos) + " exceeds max_positions " +
                              std::to_string(config_.max_positions));
    }
    positions[static_cast<std::size_t>(i)] = pos;
    kinds[static_cast<std::size_t>(i)] = static_cast<int>(seg);
  }
  Tensor x = add(embeddings, embedding(position_embedding_, positions));
  if (config_.positions == PositionMode::segment) x = add(x, embedding(segment_embedding_, kinds));
  return x;
}

Tensor LanguageModel::hidden(const Tensor& embeddings, std::span<const Segment> segments) const {
  Tensor x = add_positions(embeddings, segments, 0, Segment::prompt, 0);
  const std::vector<real> mask = causal_mask(embeddings.rows());
  for (const TransformerBlock& block : blocks_) x = block.forward(x, mask);
  return final_norm_.forward(x);
}

Tensor LanguageModel::logits(const Tensor& embeddings, std::span<const Segment> segments) const {
  return head_.forward(hidden(embeddings, segments));
}

Tensor LanguageModel::last_logits(const Tensor& embeddings, std::span<const Segment> segments) const {
  Tensor h = hidden(embeddings, segments);
  return head_.forward(slice_rows(h, h.rows() - 1, h.rows()));
}

Tensor LanguageModel::extend(const Tensor& embeddings, std::span<const Segment> segments, DecodeCache& cache) const {
  const int n = embeddings.rows();
  cache.keys.resize(blocks_.size());
  cache.values.resize(blocks_.size());
  Tensor x = add_positions(embeddings, segments, cache.length, cache.segment, cache.segment_length);
  for (std::size_t i = 0; i < blocks_.size(); ++i) x = blocks_[i].forward_incremental(x, cache.keys[i], cache.values[i]);
  for (Segment seg : segments) {
    cache.segment_length = (cache.length > 0 && seg == cache.segment) ? cache.segment_length + 1 : 1;
    cache.segment = seg;
    ++cache.length;
  }
  return head_.forward(final_norm_.forward(slice_rows(x, n - 1, n)));
}

Linear& LanguageModel::target(std::size_t block, const std::string& name) {
  MultiHeadAttention& attn = blocks_[block].attention();
  if (name == "q") return attn.query();
  if (name == "k") return attn.key();
  if (name == "v") return attn.value();
  if (name == "o") return attn.output();
  throw ConfigError("unknown LoRA target '" + name + "' (expected q, k, v or o)");
}

void LanguageModel::apply_lora(ParameterStore& store, const LoraConfig& config, Rng& rng) {
  if (config.rank < 1) throw ConfigError("LoRA rank must be >= 1");
  if (config.targets.empty()) throw ConfigError("LoRA needs at least one target");
  for (const std::string& name : config.targets) target(0, name);  // validate before mutating
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (const std::string& name : config.targets) target(b, name).attach_lora(store, config.rank, config.alpha, rng);
  }
}

void LanguageModel::merge_lora(ParameterStore& store) {
  if (!has_lora()) throw ContractViolation("merge_lora: no adapters installed");
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (const char* name : {"q", "k", "v", "o"}) {
      Linear& lin = target(b, name);
      if (lin.has_lora()) lin.merge_lora(store);
    }
  }
}

bool LanguageModel::has_lora() const {
  for (const TransformerBlock& block : blocks_) {
    auto& attn = const_cast<TransformerBlock&>(block).attention();
    if (attn.query().has_lora() || attn.key().has_lora() || attn.value().has_lora() || attn.output().has_lora()) {
      return true;
    }
  }
  return false;
}

int RegulatedSequence::scored() const { return static_cast<int>(std::count(loss_mask.begin(), loss_mask.end(), true)); }

namespace {

void require_width(const Tensor& t, int width, const char* what) {
  if (t.rank() != 2 || t.cols() != width) {
    throw ContractViolation(std::string("regulate: ") + what + " has shape " + shape_string(t.shape()) +
                            ", expected width " + std::to_string(width));
  }
}

}  // namespace

RegulatedSequence regulate(const Tensor& prompt, const Tensor& speech) {
  require_width(prompt, prompt.cols(), "prompt");
  require_width(speech, prompt.cols(), "speech");
  const Tensor parts[] = {prompt, speech};
  RegulatedSequence seq;
  seq.embeddings = concat_rows(parts);
  const int n = seq.embeddings.rows();
  seq.loss_mask.assign(static_cast<std::size_t>(n), false);
  seq.targets.assign(static_cast<std::size_t>(n), -1);
  seq.segments.assign(static_cast<std::size_t>(prompt.rows()), Segment::prompt);
  seq.segments.insert(seq.segments.end(), static_cast<std::size_t>(speech.rows()), Segment::speech);
  return seq;
}

RegulatedSequence regulate(const Tensor& prompt, const Tensor& speech, const Tensor& transcript,
                           std::span<const int> transcript_ids) {
  require_width(prompt, prompt.cols(), "prompt");
  require_width(speech, prompt.cols(), "speech");
  require_width(transcript, prompt.cols(), "transcript");
  if (static_cast<int>(transcript_ids.size()) != transcript.rows()) {
    throw ContractViolation("regulate: transcript ids do not match transcript embeddings");
  }
  const int context = prompt.rows() + speech.rows();
  if (context < 1) throw ContractViolation("regulate: nothing precedes the transcript");
  const Tensor parts[] = {prompt, speech, transcript};
  RegulatedSequence seq;
  seq.embeddings = concat_rows(parts);
  const int n = seq.embeddings.rows();
  seq.loss_mask.assign(static_cast<std::size_t>(n), false);
  seq.targets.assign(static_cast<std::size_t>(n), -1);
  seq.segments.assign(static_cast<std::size_t>(prompt.rows()), Segment::prompt);
  seq.segments.insert(seq.segments.end(), static_cast<std::size_t>(speech.rows()), Segment::speech);
  seq.segments.insert(seq.segments.end(), static_cast<std::size_t>(transcript.rows()), Segment::transcript);
  // Position context-1+i predicts transcript[i]; the last position predicts EOS.
  for (int i = 0; i <= static_cast<int>(transcript_ids.size()); ++i) {
    const std::size_t p = static_cast<std::size_t>(context - 1 + i);
    seq.loss_mask[p] = true;
    seq.targets[p] = i < static_cast<int>(transcript_ids.size()) ? transcript_ids[static_cast<std::size_t>(i)] : kEosId;
  }
  return seq;
}

Tensor forward_loss(const LanguageModel& model, const RegulatedSequence& sequence) {
  if (sequence.scored() == 0) throw UndefinedLossError("forward_loss: loss mask is empty");
  std::vector<int> targets(sequence.targets);
  for (int& t : targets) t = std::max(t, 0);
  return cross_entropy(model.logits(sequence.embeddings, sequence.segments), targets, sequence.loss_mask);
}

TokenSequence generate(const LanguageModel& model, const Tensor& prompt, const Tensor& speech, int max_len) {
  if (max_len < 1) throw ContractViolation("generate: max_len must be >= 1");
  NoGradGuard no_grad;
  TokenSequence out;
  out.role = TokenRole::generated;
  const Tensor parts[] = {prompt, speech};
  std::vector<Segment> segments(static_cast<std::size_t>(prompt.rows()), Segment::prompt);
  segments.insert(segments.end(), static_cast<std::size_t>(speech.rows()), Segment::speech);
  LanguageModel::DecodeCache cache;
  Tensor logits = model.extend(concat_rows(parts), segments, cache);
  const Segment transcript[] = {Segment::transcript};
  for (;;) {
    const auto row = logits.values();
    const int best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == kEosId) break;
    const int next_position = model.config().positions == PositionMode::segment
                                  ? (cache.segment == Segment::transcript ? cache.segment_length : 0)
                                  : cache.length;
    if (static_cast<int>(out.ids.size()) == max_len || next_position == model.config().max_positions) {
      out.truncated = true;
      break;
    }
    out.ids.push_back(best);
    logits = model.extend(model.embed(std::span<const int>(&best, 1)), transcript, cache);
  }
  return out;
}

}  // namespace speechllm
