#pragma once

#include "speechllm/cer.h"
#include "speechllm/corpus.h"
#include "speechllm/model.h"

namespace speechllm {

// Greedy transcription of every utterance, scored against its transcript.
// Truncated generations are scored as produced and counted in the report.
CerReport evaluate(const SpeechLlm& model, const Dataset& data);

// Same, decoding with the encoder's CTC head instead of the LLM.
CerReport evaluate_ctc(const SpeechLlm& model, const Dataset& data);

}  // namespace speechllm
