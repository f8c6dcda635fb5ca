#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "speechllm/encoder.h"

namespace speechllm {

struct Utterance {
  std::string id;
  FeatureSequence features;
  std::string transcript;
  std::string dialect;
  bool operator==(const Utterance&) const = default;
};

using Dataset = std::vector<Utterance>;

// Synthetic dialect: an orthogonal feature rotation plus noise models accent;
// a symbol substitution table models lexical variation (the speaker says
// substitutions[c] where the transcript has c).
struct DialectParams {
  std::string tag;
  std::optional<std::uint64_t> rotation_seed;  // nullopt: identity rotation
  double noise = 0.0;
  std::map<char, char> substitutions;

  // Tag nonempty, noise >= 0, table injective and inside the alphabet.
  void validate(const std::string& alphabet) const;
};

struct CorpusConfig {
  std::uint64_t seed = 1;
  int n_utts = 2000;
  std::string alphabet = "abcdefghijklmnop";
  int feature_dim = 24;
  int frames_per_symbol = 16;
  int min_symbols = 5;
  int max_symbols = 30;
  std::vector<DialectParams> dialects;

  void validate() const;
};

// Three dialects: a clean standard one, an accent (rotation + noise), and a
// lexical dialect (rotation + noise + swapped symbol pairs).
std::vector<DialectParams> default_dialects();

// Parses "ab,ba,cd" into {a->b, b->a, c->d}.
std::map<char, char> parse_substitutions(const std::string& text);
std::string format_substitutions(const std::map<char, char>& table);

// Row-major dim x dim orthonormal matrix derived from the seed.
std::vector<real> dialect_rotation(std::uint64_t seed, int dim);

// Deterministic in the config. Utterance ids are "utt-000000"... in order.
Dataset synth_corpus(const CorpusConfig& config);

struct CorpusSplit {
  Dataset train, dev, test;
};
// Contiguous split by fractions (remainder goes to train).
CorpusSplit split_corpus(Dataset data, double dev_fraction, double test_fraction);

}  // namespace speechllm
