#include "speechllm/evaluate.h"

namespace speechllm {

CerReport evaluate(const SpeechLlm& model, const Dataset& data) {
  CerReport report;
  for (const Utterance& utt : data) {
    UtteranceScore score{utt.id, utt.dialect, utt.transcript, {}, {}, false};
    score.hyp = model.transcribe(utt.features, &score.truncated);
    score.counts = align_counts(score.hyp, score.ref);
    report.add(std::move(score));
  }
  return report;
}

CerReport evaluate_ctc(const SpeechLlm& model, const Dataset& data) {
  CerReport report;
  for (const Utterance& utt : data) {
    UtteranceScore score{utt.id, utt.dialect, utt.transcript, model.ctc_transcribe(utt.features), {}, false};
    score.counts = align_counts(score.hyp, score.ref);
    report.add(std::move(score));
  }
  return report;
}

}  // namespace speechllm
