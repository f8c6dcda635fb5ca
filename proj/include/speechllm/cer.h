#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace speechllm {

struct EditCounts {
  long substitutions = 0;
  long insertions = 0;
  long deletions = 0;
  long ref_length = 0;

  long errors() const { return substitutions + insertions + deletions; }
  // errors / ref_length; throws UndefinedRateError when ref_length == 0.
  double rate() const;
  EditCounts& operator+=(const EditCounts& other);
  bool operator==(const EditCounts&) const = default;
};

// Character-level Levenshtein alignment. Among minimal alignments the
// backtrace prefers substitution, then insertion, then deletion, so the
// breakdown is deterministic.
EditCounts align_counts(std::string_view hyp, std::string_view ref);
// Throws UndefinedRateError for an empty reference.
double cer(std::string_view hyp, std::string_view ref);

struct UtteranceScore {
  std::string id;
  std::string dialect;
  std::string ref;
  std::string hyp;
  EditCounts counts;
  bool truncated = false;
};

// Micro-averaged error rates overall and per dialect.
class CerReport {
 public:
  void add(UtteranceScore score);

  const std::vector<UtteranceScore>& utterances() const { return utterances_; }
  const std::map<std::string, EditCounts>& by_dialect() const { return by_dialect_; }
  const EditCounts& overall() const { return overall_; }
  double overall_cer() const { return overall_.rate(); }
  double dialect_cer(const std::string& tag) const;
  int truncated() const { return truncated_; }

  std::string to_table() const;
  nlohmann::json to_json(bool with_utterances = false) const;

 private:
  std::vector<UtteranceScore> utterances_;
  std::map<std::string, EditCounts> by_dialect_;
  EditCounts overall_;
  int truncated_ = 0;
};

}  // namespace speechllm
