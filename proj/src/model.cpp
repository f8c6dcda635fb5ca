#include "speechllm/model.h"

#include "speechllm/ctc.h"
#include "speechllm/error.h"
#include "speechllm/ops.h"

namespace speechllm {

std::string_view llm_mode_name(LlmMode mode) {
  switch (mode) {
    case LlmMode::lora: return "lora";
    case LlmMode::full: return "full";
    case LlmMode::frozen: return "frozen";
  }
  return "?";
}

LlmMode parse_llm_mode(std::string_view name) {
  if (name == "lora") return LlmMode::lora;
  if (name == "full") return LlmMode::full;
  if (name == "frozen") return LlmMode::frozen;
  throw ConfigError("unknown llm mode '" + std::string(name) + "' (expected lora, full or frozen)");
}

std::uint64_t component_seed(std::uint64_t seed, std::string_view component) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : component) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return seed ^ h;
}

SpeechLlm::SpeechLlm(const ModelConfig& config, std::uint64_t seed)
    : config_(config), vocab_(config.symbols.empty() ? Vocabulary::standard() : Vocabulary(config.symbols)) {
  config_.llm.vocab_size = vocab_.size();
  config_.projector.validate();

  Rng encoder_rng(component_seed(seed, "encoder"));
  encoder_ = std::make_unique<Encoder>(store_, config_.encoder, encoder_rng);
  Rng ctc_rng(component_seed(seed, "ctc_head"));
  ctc_head_ = std::make_unique<CtcHead>(store_, config_.encoder.dim, vocab_.size() + 1, ctc_rng);
  Rng projector_rng(component_seed(seed, "projector"));
  projector_ = make_projector(store_, config_.encoder.dim, config_.projector, projector_rng);
  Rng bridge_rng(component_seed(seed, "llm_bridge"));
  bridge_ = std::make_unique<LlmBridge>(store_, config_.encoder.dim, config_.llm.dim, bridge_rng);
  Rng llm_rng(component_seed(seed, "llm"));
  llm_ = std::make_unique<LanguageModel>(store_, config_.llm, llm_rng);
  if (config_.llm_mode == LlmMode::lora) {
    Rng lora_rng(component_seed(seed, "lora"));
    llm_->apply_lora(store_, config_.lora, lora_rng);
  }
  prompt_ids_ = vocab_.tokenize(config_.prompt, TokenRole::prompt).ids;
  if (config_.max_decode_len < 1) throw ConfigError("max_decode_len must be >= 1");
}

SpeechEmbedding SpeechLlm::embed_speech(const FeatureSequence& features) const {
  return project(*projector_, *bridge_, encoder_->encode(features));
}

Tensor SpeechLlm::prompt_embeddings() const { return llm_->embed(prompt_ids_); }

RegulatedSequence SpeechLlm::regulated(const Utterance& utt) const {
  const std::vector<int> ids = vocab_.tokenize(utt.transcript, TokenRole::transcript).ids;
  return regulate(prompt_embeddings(), embed_speech(utt.features).vectors, llm_->embed(ids), ids);
}

Tensor SpeechLlm::transcript_loss(const Utterance& utt) const { return forward_loss(*llm_, regulated(utt)); }

Tensor SpeechLlm::ctc_loss(const Utterance& utt) const {
  const std::vector<int> ids = vocab_.tokenize(utt.transcript, TokenRole::transcript).ids;
  return speechllm::ctc_loss(ctc_head_->logits(encoder_->encode(utt.features)), ids);
}

Tensor SpeechLlm::relay_loss(std::string_view text) const {
  const std::vector<int> ids = vocab_.tokenize(text, TokenRole::transcript).ids;
  const Tensor embedded = llm_->embed(ids);
  return forward_loss(*llm_, regulate(prompt_embeddings(), embedded, embedded, ids));
}

TokenSequence SpeechLlm::transcribe_tokens(const FeatureSequence& features) const {
  NoGradGuard no_grad;
  return generate(*llm_, prompt_embeddings(), embed_speech(features).vectors, config_.max_decode_len);
}

std::string SpeechLlm::transcribe(const FeatureSequence& features, bool* truncated) const {
  const TokenSequence out = transcribe_tokens(features);
  if (truncated) *truncated = out.truncated;
  return vocab_.detokenize(out.ids);
}

std::string SpeechLlm::ctc_transcribe(const FeatureSequence& features) const {
  NoGradGuard no_grad;
  const std::vector<int> ids = ctc_greedy_decode(ctc_head_->logits(encoder_->encode(features)));
  return vocab_.detokenize(ids);
}

}  // namespace speechllm
