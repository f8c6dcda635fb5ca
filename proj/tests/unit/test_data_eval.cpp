#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "fixtures.h"
#include "oracles.h"
#include "speechllm/cer.h"
#include "speechllm/corpus.h"
#include "speechllm/error.h"
#include "speechllm/evaluate.h"
#include "speechllm/manifest.h"

using namespace speechllm;
namespace fs = std::filesystem;

namespace {

std::string random_string(std::mt19937_64& rng, int max_len, const std::string& alphabet = "abc") {
  std::uniform_int_distribution<int> len(0, max_len);
  std::uniform_int_distribution<std::size_t> sym(0, alphabet.size() - 1);
  std::string s(len(rng), ' ');
  for (char& c : s) c = alphabet[sym(rng)];
  return s;
}

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("speechllm_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("cer hand cases") {
  CHECK(cer("abcd", "abcd") == 0.0);
  CHECK(cer("abxd", "abcd") == 0.25);
  CHECK(align_counts("abxd", "abcd") == EditCounts{1, 0, 0, 4});
  CHECK(cer("", "ab") == 1.0);
  CHECK(align_counts("", "ab").deletions == 2);
  CHECK(align_counts("abc", "ab").insertions == 1);
  CHECK_THROWS_AS(cer("a", ""), UndefinedRateError);
}

TEST_CASE("cer matches the dynamic-programming oracle") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 1000; ++i) {
    std::string ref = random_string(rng, 20);
    std::string hyp = random_string(rng, 20);
    EditCounts c = align_counts(hyp, ref);
    CHECK(c.errors() == testing::edit_distance(hyp, ref));
    CHECK(c.ref_length == static_cast<long>(ref.size()));
    CHECK(c.ref_length - c.deletions + c.insertions == static_cast<long>(hyp.size()));
  }
}

TEST_CASE("cer metric properties") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 300; ++i) {
    std::string a = random_string(rng, 12), b = random_string(rng, 12), c = random_string(rng, 12);
    EditCounts ab = align_counts(a, b), ba = align_counts(b, a);
    CHECK(align_counts(a, a).errors() == 0);
    CHECK(ab.errors() == ba.errors());
    CHECK(ab.insertions - ab.deletions == ba.deletions - ba.insertions);
    if (!a.empty() && !b.empty()) CHECK(cer(a, b) * b.size() == doctest::Approx(cer(b, a) * a.size()));
    CHECK(align_counts(a, c).errors() <= ab.errors() + align_counts(b, c).errors());
  }
}

TEST_CASE("corpus cer is a micro average") {
  CerReport report;
  EditCounts one{1, 0, 0, 10};
  EditCounts perfect{0, 0, 0, 30};
  report.add({"u1", "x", std::string(10, 'a'), "", one, false});
  report.add({"u2", "y", std::string(30, 'a'), "", perfect, false});
  CHECK(report.overall_cer() == 0.025);
  CHECK(report.dialect_cer("x") == 0.1);
  CHECK(report.dialect_cer("y") == 0.0);

  CerReport single;
  single.add({"u1", "x", "abcd", "abxd", align_counts("abxd", "abcd"), false});
  CHECK(single.overall_cer() == cer("abxd", "abcd"));
}

TEST_CASE("corpus cer does not depend on order or sharding") {
  std::mt19937_64 rng(14);
  std::vector<UtteranceScore> scores;
  for (int i = 0; i < 50; ++i) {
    std::string ref = random_string(rng, 15) + "a";
    std::string hyp = random_string(rng, 15);
    scores.push_back({"u" + std::to_string(i), i % 2 ? "x" : "y", ref, hyp, align_counts(hyp, ref), false});
  }
  CerReport forward, backward, first, second;
  for (const auto& s : scores) forward.add(s);
  for (auto it = scores.rbegin(); it != scores.rend(); ++it) backward.add(*it);
  for (std::size_t i = 0; i < scores.size(); ++i) (i < 20 ? first : second).add(scores[i]);
  EditCounts merged = first.overall();
  merged += second.overall();
  CHECK(forward.overall() == backward.overall());
  CHECK(forward.overall() == merged);
  CHECK(forward.overall_cer() == backward.overall_cer());
  CHECK(forward.to_json()["dialects"].size() == 2);
  CHECK(forward.to_table().find("overall") != std::string::npos);
}

TEST_CASE("synthetic corpus is deterministic in its seed") {
  CorpusConfig c = testing::tiny_corpus_config();
  Dataset a = synth_corpus(c);
  Dataset b = synth_corpus(c);
  CHECK(a == b);
  c.seed += 1;
  CHECK_FALSE(synth_corpus(c) == a);
  for (const Utterance& u : a) {
    CHECK(u.transcript.size() >= 2);
    CHECK(u.transcript.size() <= 4);
    CHECK(u.features.num_frames == static_cast<int>(u.transcript.size()) * c.frames_per_symbol);
    CHECK(u.features.frame_rate_hz == 100.0);
  }
}

TEST_CASE("dialects have measurably different feature statistics") {
  CorpusConfig c = testing::tiny_corpus_config(200);
  c.dialects[1].substitutions = {{'a', 'b'}, {'b', 'a'}};
  std::map<std::string, std::vector<double>> mean;
  std::map<std::string, int> count;
  for (const Utterance& u : synth_corpus(c)) {
    auto& m = mean[u.dialect];
    m.resize(c.feature_dim);
    for (int t = 0; t < u.features.num_frames; ++t)
      for (int d = 0; d < c.feature_dim; ++d) m[d] += u.features.values[t * c.feature_dim + d];
    count[u.dialect] += u.features.num_frames;
  }
  REQUIRE(mean.size() == 2);
  double gap = 0;
  for (int d = 0; d < c.feature_dim; ++d) gap += std::abs(mean["standard"][d] / count["standard"] - mean["accent"][d] / count["accent"]);
  CHECK(gap > 0.1);
}

TEST_CASE("dialect rotations are orthonormal") {
  const int dim = 6;
  auto q = dialect_rotation(42, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      double dot = 0;
      for (int k = 0; k < dim; ++k) dot += q[i * dim + k] * q[j * dim + k];
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }
}

TEST_CASE("corpus configuration errors") {
  CorpusConfig c = testing::tiny_corpus_config();
  c.n_utts = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = testing::tiny_corpus_config();
  c.dialects.clear();
  CHECK_THROWS_AS(synth_corpus(c), ConfigError);
  c = testing::tiny_corpus_config();
  c.dialects[0].substitutions = {{'a', 'c'}, {'b', 'c'}};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.dialects[0].substitutions = {{'a', 'z'}};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_substitutions("ab,ba") == std::map<char, char>{{'a', 'b'}, {'b', 'a'}});
  CHECK(format_substitutions(parse_substitutions("ab,ba")) == "ab,ba");
}

TEST_CASE("split is contiguous with disjoint ids") {
  Dataset data = synth_corpus(testing::tiny_corpus_config(50));
  CorpusSplit s = split_corpus(data, 0.1, 0.2);
  CHECK(s.train.size() == 35);
  CHECK(s.dev.size() == 5);
  CHECK(s.test.size() == 10);
  std::set<std::string> ids;
  for (const Dataset* d : {&s.train, &s.dev, &s.test})
    for (const Utterance& u : *d) CHECK(ids.insert(u.id).second);
}

TEST_CASE("manifest round trip with feature files and inline features") {
  Dataset data = synth_corpus(testing::tiny_corpus_config(6));
  fs::path dir = scratch_dir("manifest");
  write_manifest(dir / "files.jsonl", data, FeatureStorage::files);
  write_manifest(dir / "inline.jsonl", data, FeatureStorage::inline_values);
  CHECK(fs::exists(dir / "features" / (data[0].id + ".bin")));
  CHECK(read_manifest(dir / "files.jsonl") == data);
  Dataset back = read_manifest(dir / "inline.jsonl");
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].transcript == data[i].transcript);
    CHECK(back[i].features.num_frames == data[i].features.num_frames);
  }
}

TEST_CASE("manifest edge cases") {
  fs::path dir = scratch_dir("manifest_edges");
  std::ofstream(dir / "empty.jsonl");
  CHECK(read_manifest(dir / "empty.jsonl").empty());

  std::ofstream(dir / "extra.jsonl") << "\n{\"transcript\": \"ab\", \"dialect\": \"x\", \"speaker\": 7, "
                                        "\"features\": [[1, 2], [3, 4], [5, 6], [7, 8]]}\n";
  Dataset extra = read_manifest(dir / "extra.jsonl");
  REQUIRE(extra.size() == 1);
  CHECK(extra[0].id == "line-2");
  CHECK(extra[0].features.num_frames == 4);
  CHECK(extra[0].features.dim == 2);

  std::ofstream(dir / "missing.jsonl") << "{\"transcript\": \"ab\", \"dialect\": \"x\", \"features\": [[1]]}\n"
                                          "{\"dialect\": \"x\", \"features\": [[1]]}\n";
  try {
    read_manifest(dir / "missing.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    std::string what = e.what();
    CHECK(what.find(":2:") != std::string::npos);
    CHECK(what.find("transcript") != std::string::npos);
  }
  std::ofstream(dir / "both.jsonl") << "{\"transcript\": \"a\", \"dialect\": \"x\", \"features\": [[1]], "
                                       "\"feature_file\": \"f.bin\"}\n";
  CHECK_THROWS_AS(read_manifest(dir / "both.jsonl"), ParseError);
  CHECK_THROWS_AS(read_manifest(dir / "absent.jsonl"), IoError);
}

TEST_CASE("manifest reader streams records with line numbers") {
  fs::path dir = scratch_dir("manifest_stream");
  write_manifest(dir / "m.jsonl", synth_corpus(testing::tiny_corpus_config(3)), FeatureStorage::inline_values);
  ManifestReader reader(dir / "m.jsonl");
  int n = 0;
  while (auto u = reader.next()) {
    ++n;
    CHECK(reader.line_number() == n);
  }
  CHECK(n == 3);
}

TEST_CASE("evaluation of one utterance equals its own cer and is deterministic") {
  SpeechLlm model(testing::tiny_model_config(), 2);
  Dataset data = synth_corpus(testing::tiny_corpus_config(3));
  CerReport a = evaluate(model, {data[0]});
  CerReport b = evaluate(model, {data[0]});
  REQUIRE(a.utterances().size() == 1);
  const UtteranceScore& s = a.utterances()[0];
  CHECK(a.overall_cer() == cer(s.hyp, s.ref));
  CHECK(a.overall() == b.overall());
  CHECK(a.utterances()[0].hyp == b.utterances()[0].hyp);
  CHECK(evaluate_ctc(model, data).utterances().size() == 3);
}
