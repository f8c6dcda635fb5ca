#include "speechllm/corpus.h"

#include <Eigen/Dense>
#include <cstdio>
#include <random>
#include <set>

#include "speechllm/error.h"

namespace speechllm {

void DialectParams::validate(const std::string& alphabet) const {
  if (tag.empty()) throw ConfigError("dialect tag must not be empty");
  if (!(noise >= 0)) throw ConfigError("dialect '" + tag + "': noise must be non-negative");
  std::set<char> images;
  for (const auto& [from, to] : substitutions) {
    if (alphabet.find(from) == std::string::npos || alphabet.find(to) == std::string::npos) {
      throw ConfigError("dialect '" + tag + "': substitution " + std::string(1, from) + "->" + std::string(1, to) +
                        " leaves the alphabet");
    }
    if (!images.insert(to).second) {
      throw ConfigError("dialect '" + tag + "': substitution table is not injective at '" + std::string(1, to) + "'");
    }
  }
}

void CorpusConfig::validate() const {
  if (n_utts < 1) throw ConfigError("corpus needs n_utts >= 1, got " + std::to_string(n_utts));
  if (dialects.empty()) throw ConfigError("corpus needs at least one dialect");
  if (alphabet.empty()) throw ConfigError("corpus alphabet is empty");
  if (feature_dim < 1 || frames_per_symbol < 1) throw ConfigError("bad feature geometry");
  if (min_symbols < 1 || max_symbols < min_symbols) throw ConfigError("bad transcript length range");
  std::set<std::string> tags;
  for (const DialectParams& d : dialects) {
    d.validate(alphabet);
    if (!tags.insert(d.tag).second) throw ConfigError("duplicate dialect tag '" + d.tag + "'");
  }
}

std::vector<DialectParams> default_dialects() {
  return {
      DialectParams{"standard", std::nullopt, 0.1, {}},
      DialectParams{"accent", 101, 0.3, {}},
      DialectParams{"dialect", 202, 0.2, parse_substitutions("ae,ea,io,oi,bp,pb")},
  };
}

std::map<char, char> parse_substitutions(const std::string& text) {
  std::map<char, char> table;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(pos, comma - pos);
    if (item.size() != 2) throw ConfigError("substitution entries are two characters, got '" + item + "'");
    if (!table.emplace(item[0], item[1]).second) {
      throw ConfigError("substitution for '" + std::string(1, item[0]) + "' given twice");
    }
    pos = comma + 1;
  }
  return table;
}

std::string format_substitutions(const std::map<char, char>& table) {
  std::string out;
  for (const auto& [from, to] : table) {
    if (!out.empty()) out += ',';
    out += from;
    out += to;
  }
  return out;
}

std::vector<real> dialect_rotation(std::uint64_t seed, int dim) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd gaussian(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) gaussian(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
  std::vector<real> out(static_cast<std::size_t>(dim) * dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) out[static_cast<std::size_t>(i) * dim + j] = static_cast<real>(q(i, j));
  }
  return out;
}

Dataset synth_corpus(const CorpusConfig& config) {
  config.validate();
  const int dim = config.feature_dim;
  const int fps = config.frames_per_symbol;

  // Per-symbol canonical templates: fps frames of dim values each.
  Rng template_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::map<char, std::vector<double>> templates;
  for (char c : config.alphabet) {
    std::vector<double> t(static_cast<std::size_t>(fps) * dim);
    for (double& v : t) v = normal(template_rng);
    templates[c] = std::move(t);
  }

  std::vector<std::vector<real>> rotations;
  for (const DialectParams& d : config.dialects) {
    rotations.push_back(d.rotation_seed ? dialect_rotation(*d.rotation_seed, dim) : std::vector<real>{});
  }

  Rng rng(config.seed);
  std::uniform_int_distribution<int> length_dist(config.min_symbols, config.max_symbols);
  std::uniform_int_distribution<int> symbol_dist(0, static_cast<int>(config.alphabet.size()) - 1);
  std::uniform_int_distribution<int> dialect_dist(0, static_cast<int>(config.dialects.size()) - 1);

  Dataset data;
  data.reserve(static_cast<std::size_t>(config.n_utts));
  std::vector<double> frame(static_cast<std::size_t>(dim));
  for (int u = 0; u < config.n_utts; ++u) {
    const int which = dialect_dist(rng);
    const DialectParams& dialect = config.dialects[static_cast<std::size_t>(which)];
    const std::vector<real>& rotation = rotations[static_cast<std::size_t>(which)];
    const int length = length_dist(rng);

    Utterance utt;
    char id[32];
    std::snprintf(id, sizeof id, "utt-%06d", u);
    utt.id = id;
    utt.dialect = dialect.tag;
    for (int i = 0; i < length; ++i) utt.transcript += config.alphabet[static_cast<std::size_t>(symbol_dist(rng))];

    utt.features.dim = dim;
    utt.features.num_frames = length * fps;
    utt.features.frame_rate_hz = kInputFrameRateHz;
    utt.features.values.reserve(static_cast<std::size_t>(length) * fps * dim);
    for (char c : utt.transcript) {
      auto sub = dialect.substitutions.find(c);
      const std::vector<double>& tmpl = templates.at(sub == dialect.substitutions.end() ? c : sub->second);
      for (int f = 0; f < fps; ++f) {
        for (int j = 0; j < dim; ++j) {
          frame[static_cast<std::size_t>(j)] =
              tmpl[static_cast<std::size_t>(f) * dim + j] + dialect.noise * normal(rng);
        }
        for (int j = 0; j < dim; ++j) {
          double v = frame[static_cast<std::size_t>(j)];
          if (!rotation.empty()) {
            v = 0;
            for (int i = 0; i < dim; ++i) {
              v += frame[static_cast<std::size_t>(i)] * static_cast<double>(rotation[static_cast<std::size_t>(i) * dim + j]);
            }
          }
          utt.features.values.push_back(static_cast<real>(v));
        }
      }
    }
    data.push_back(std::move(utt));
  }
  return data;
}

CorpusSplit split_corpus(Dataset data, double dev_fraction, double test_fraction) {
  if (dev_fraction < 0 || test_fraction < 0 || dev_fraction + test_fraction >= 1) {
    throw ConfigError("split fractions must be non-negative and sum below 1");
  }
  const std::size_t n = data.size();
  const auto n_dev = static_cast<std::size_t>(static_cast<double>(n) * dev_fraction);
  const auto n_test = static_cast<std::size_t>(static_cast<double>(n) * test_fraction);
  const std::size_t n_train = n - n_dev - n_test;
  CorpusSplit split;
  split.train.assign(std::make_move_iterator(data.begin()), std::make_move_iterator(data.begin() + static_cast<std::ptrdiff_t>(n_train)));
  split.dev.assign(std::make_move_iterator(data.begin() + static_cast<std::ptrdiff_t>(n_train)),
                   std::make_move_iterator(data.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev)));
  split.test.assign(std::make_move_iterator(data.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev)),
                    std::make_move_iterator(data.end()));
  return split;
}

}  // namespace speechllm
