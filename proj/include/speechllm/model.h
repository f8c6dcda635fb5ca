#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "speechllm/corpus.h"
#include "speechllm/encoder.h"
#include "speechllm/llm.h"
#include "speechllm/projector.h"
#include "speechllm/vocab.h"

namespace speechllm {

// How the LLM takes part in training: LoRA adapters (default), full
// fine-tuning of llm_body, or not at all.
enum class LlmMode { lora, full, frozen };
std::string_view llm_mode_name(LlmMode mode);
LlmMode parse_llm_mode(std::string_view name);

inline constexpr const char* kDefaultPrompt = "Transcribe the following speech";

struct ModelConfig {
  EncoderConfig encoder;
  ProjectorConfig projector;
  LlmConfig llm;  // vocab_size is taken from the vocabulary
  LoraConfig lora;
  LlmMode llm_mode = LlmMode::lora;
  std::string prompt = kDefaultPrompt;
  std::string symbols;  // vocabulary symbols; empty means the standard set
  int max_decode_len = 64;
};

// Encoder -> projector -> bridge -> decoder-only LLM, plus a CTC head on the
// encoder. Each component draws its initial weights from its own stream
// derived from the seed, so changing one component leaves the others intact.
class SpeechLlm {
 public:
  SpeechLlm(const ModelConfig& config, std::uint64_t seed);
  SpeechLlm(const SpeechLlm&) = delete;
  SpeechLlm& operator=(const SpeechLlm&) = delete;

  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Encoder& encoder() const { return *encoder_; }
  const Projector& projector() const { return *projector_; }
  const LanguageModel& llm() const { return *llm_; }
  LanguageModel& llm() { return *llm_; }
  const std::vector<int>& prompt_ids() const { return prompt_ids_; }

  SpeechEmbedding embed_speech(const FeatureSequence& features) const;
  Tensor prompt_embeddings() const;
  RegulatedSequence regulated(const Utterance& utt) const;

  // Next-token loss on prompt ⊕ speech ⊕ transcript.
  Tensor transcript_loss(const Utterance& utt) const;
  // CTC loss of the encoder + CTC head against the transcript.
  Tensor ctc_loss(const Utterance& utt) const;
  // Text-only relay task used to pretrain the LLM: prompt ⊕ embed(text),
  // then reproduce text and EOS.
  Tensor relay_loss(std::string_view text) const;

  TokenSequence transcribe_tokens(const FeatureSequence& features) const;
  std::string transcribe(const FeatureSequence& features, bool* truncated = nullptr) const;
  std::string ctc_transcribe(const FeatureSequence& features) const;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  ParameterStore store_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<CtcHead> ctc_head_;
  std::unique_ptr<Projector> projector_;
  std::unique_ptr<LlmBridge> bridge_;
  std::unique_ptr<LanguageModel> llm_;
  std::vector<int> prompt_ids_;
};

// Stable per-component seed.
std::uint64_t component_seed(std::uint64_t seed, std::string_view component);

}  // namespace speechllm
