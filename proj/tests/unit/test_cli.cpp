#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "tiny_config.h"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  std::string command = std::string(SPEECHLLM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("speechllm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_config(const fs::path& dir, const std::string& yaml) {
  std::ofstream(dir / "config.yaml") << yaml;
  return dir / "config.yaml";
}

std::set<std::string> ids_of(const fs::path& manifest) {
  std::set<std::string> ids;
  std::ifstream in(manifest);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) ids.insert(nlohmann::json::parse(line).at("id").get<std::string>());
  return ids;
}

}  // namespace

TEST_CASE("generate writes disjoint splits and repeats byte for byte") {
  fs::path dir = scratch_dir("generate");
  fs::path config = write_config(dir, speechllm::testing::tiny_run_yaml(30));
  REQUIRE(run_cli("generate --config " + config.string() + " --out " + (dir / "a").string()) == 0);
  REQUIRE(run_cli("generate --config " + config.string() + " --out " + (dir / "b").string()) == 0);
  std::set<std::string> all;
  std::size_t total = 0;
  for (const char* split : {"train.jsonl", "dev.jsonl", "test.jsonl"}) {
    CHECK(slurp(dir / "a" / split) == slurp(dir / "b" / split));
    auto ids = ids_of(dir / "a" / split);
    total += ids.size();
    all.insert(ids.begin(), ids.end());
  }
  CHECK(total == 30);
  CHECK(all.size() == 30);
  CHECK(fs::exists(dir / "a" / "config.yaml"));
}

TEST_CASE("invalid configurations exit nonzero") {
  fs::path dir = scratch_dir("bad_config");
  fs::path zero = write_config(dir, "corpus: {n_utts: 0}\n");
  CHECK(run_cli("generate --config " + zero.string() + " --out " + (dir / "out").string()) != 0);
  std::ofstream(dir / "typo.yaml") << "corpus: {n_utt: 10}\n";
  CHECK(run_cli("generate --config " + (dir / "typo.yaml").string() + " --out " + (dir / "out").string()) != 0);
  CHECK(run_cli("train --projector mlp --out " + (dir / "out").string()) != 0);
}

TEST_CASE("usage errors exit with status 2") {
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("sweep tables --out /tmp/none") == 2);
}

TEST_CASE("train then evaluate a checkpoint") {
  fs::path dir = scratch_dir("train");
  fs::path config = write_config(dir, speechllm::testing::tiny_run_yaml());
  REQUIRE(run_cli("train --config " + config.string() + " --out " + (dir / "run").string()) == 0);
  for (int s = 1; s <= 4; ++s) CHECK(fs::exists(dir / "run" / ("stage" + std::to_string(s)) / "meta.txt"));
  CHECK(fs::exists(dir / "run" / "config.yaml"));
  CHECK(fs::exists(dir / "run" / "metrics.jsonl"));
  auto summary = nlohmann::json::parse(slurp(dir / "run" / "summary.json"));
  CHECK(summary.at("stages").size() == 4);

  REQUIRE(run_cli("generate --config " + config.string() + " --out " + (dir / "data").string()) == 0);
  std::string eval = "evaluate --checkpoint " + (dir / "run" / "stage4").string() + " --manifest " +
                     (dir / "data" / "test.jsonl").string() + " --out ";
  REQUIRE(run_cli(eval + (dir / "e1").string()) == 0);
  REQUIRE(run_cli(eval + (dir / "e2").string()) == 0);
  CHECK(slurp(dir / "e1" / "report.json") == slurp(dir / "e2" / "report.json"));
  auto report = nlohmann::json::parse(slurp(dir / "e1" / "report.json"));
  CHECK(report.at("dialects").size() >= 1);
  CHECK(slurp(dir / "e1" / "report.txt").find("overall") != std::string::npos);

  CHECK(run_cli("evaluate --checkpoint " + (dir / "missing").string() + " --manifest " +
                (dir / "data" / "test.jsonl").string()) != 0);
}

TEST_CASE("train flags select the stage list and LLM mode") {
  fs::path dir = scratch_dir("train_flags");
  fs::path config = write_config(dir, speechllm::testing::tiny_run_yaml());
  REQUIRE(run_cli("train --config " + config.string() + " --stages 1 --out " + (dir / "one").string()) == 0);
  CHECK(fs::exists(dir / "one" / "stage1"));
  CHECK_FALSE(fs::exists(dir / "one" / "stage2"));
  REQUIRE(run_cli("train --config " + config.string() + " --llm-mode full --projector conv1d --downsample 2 --out " +
                  (dir / "full").string()) == 0);
  std::string resolved = slurp(dir / "full" / "config.yaml");
  CHECK(resolved.find("llm_mode: full") != std::string::npos);
  CHECK(resolved.find("kind: conv1d") != std::string::npos);
  auto summary = nlohmann::json::parse(slurp(dir / "full" / "summary.json"));
  auto groups = summary.at("stages").at(2).at("trainable_groups");
  CHECK(groups == nlohmann::json::array({"llm_body"}));
}
