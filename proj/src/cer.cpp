#include "speechllm/cer.h"

#include <cstdio>
#include <sstream>

#include "speechllm/error.h"

namespace speechllm {

double EditCounts::rate() const {
  if (ref_length == 0) throw UndefinedRateError("error rate against an empty reference is undefined");
  return static_cast<double>(errors()) / static_cast<double>(ref_length);
}

EditCounts& EditCounts::operator+=(const EditCounts& other) {
  substitutions += other.substitutions;
  insertions += other.insertions;
  deletions += other.deletions;
  ref_length += other.ref_length;
  return *this;
}

EditCounts align_counts(std::string_view hyp, std::string_view ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  // d[i][j]: edits turning hyp[0,i) into ref[0,j).
  std::vector<long> d((n + 1) * (m + 1));
  const auto at = [&](std::size_t i, std::size_t j) -> long& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const long diag = at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  EditCounts counts;
  counts.ref_length = static_cast<long>(m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? 0 : 1)) {
      if (hyp[i - 1] != ref[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++counts.insertions;  // extra hypothesis character
      --i;
    } else {
      ++counts.deletions;  // reference character missing from the hypothesis
      --j;
    }
  }
  return counts;
}

double cer(std::string_view hyp, std::string_view ref) { return align_counts(hyp, ref).rate(); }

void CerReport::add(UtteranceScore score) {
  overall_ += score.counts;
  by_dialect_[score.dialect] += score.counts;
  if (score.truncated) ++truncated_;
  utterances_.push_back(std::move(score));
}

double CerReport::dialect_cer(const std::string& tag) const {
  auto it = by_dialect_.find(tag);
  if (it == by_dialect_.end()) throw ContractViolation("no utterances scored for dialect '" + tag + "'");
  return it->second.rate();
}

std::string CerReport::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %8s %8s %6s %6s %6s %8s\n", "dialect", "ref_chars", "errors", "sub", "ins",
                "del", "cer%");
  os << line;
  const auto row = [&](const std::string& name, const EditCounts& c) {
    std::snprintf(line, sizeof line, "%-14s %8ld %8ld %6ld %6ld %6ld %8.2f\n", name.c_str(), c.ref_length, c.errors(),
                  c.substitutions, c.insertions, c.deletions, c.ref_length ? 100.0 * c.rate() : 0.0);
    os << line;
  };
  for (const auto& [tag, counts] : by_dialect_) row(tag, counts);
  row("overall", overall_);
  os << "utterances " << utterances_.size() << ", truncated " << truncated_ << '\n';
  return os.str();
}

namespace {
nlohmann::json counts_json(const EditCounts& c) {
  nlohmann::json j = {{"ref_length", c.ref_length},   {"errors", c.errors()},     {"substitutions", c.substitutions},
                      {"insertions", c.insertions}, {"deletions", c.deletions}};
  j["cer"] = c.ref_length ? nlohmann::json(c.rate()) : nlohmann::json(nullptr);
  return j;
}
}  // namespace

nlohmann::json CerReport::to_json(bool with_utterances) const {
  nlohmann::json j;
  j["overall"] = counts_json(overall_);
  j["utterances"] = utterances_.size();
  j["truncated"] = truncated_;
  for (const auto& [tag, counts] : by_dialect_) j["dialects"][tag] = counts_json(counts);
  if (with_utterances) {
    for (const UtteranceScore& u : utterances_) {
      j["per_utterance"].push_back({{"id", u.id}, {"dialect", u.dialect}, {"ref", u.ref}, {"hyp", u.hyp},
                                    {"errors", u.counts.errors()}, {"truncated", u.truncated}});
    }
  }
  return j;
}

}  // namespace speechllm
