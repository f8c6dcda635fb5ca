#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "fixtures.h"
#include "speechllm/checkpoint.h"
#include "speechllm/error.h"
#include "speechllm/stages.h"

using namespace speechllm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("speechllm_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PlanConfig small_plan(std::vector<int> stages, long steps) {
  PlanConfig c;
  c.stages = std::move(stages);
  for (int s : c.stages) c.steps[s] = steps;
  c.accumulation = 2;
  c.optimizer.lr = 1e-2;
  return c;
}

std::set<Group> groups(std::initializer_list<Group> g) { return std::set<Group>(g); }

}  // namespace

TEST_CASE("canonical stage groups") {
  CHECK(canonical_groups(1, LlmMode::lora) == groups({Group::projector, Group::llm_bridge}));
  CHECK(canonical_groups(2, LlmMode::lora) == groups({Group::encoder}));
  CHECK(canonical_groups(3, LlmMode::lora) == groups({Group::lora}));
  CHECK(canonical_groups(4, LlmMode::lora) ==
        groups({Group::encoder, Group::projector, Group::llm_bridge, Group::lora}));
  CHECK(canonical_groups(4, LlmMode::lora, false) == groups({Group::encoder, Group::projector, Group::llm_bridge}));
  CHECK(canonical_groups(3, LlmMode::full) == groups({Group::llm_body}));
  CHECK(canonical_groups(3, LlmMode::frozen).empty());
  for (int s = 1; s <= 4; ++s) CHECK_FALSE(canonical_groups(s, LlmMode::lora).count(Group::llm_body));
}

TEST_CASE("stage plans from configuration") {
  StagePlan four = build_stage_plan(PlanConfig{}, LlmMode::lora, 1);
  REQUIRE(four.stages.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(four.stages[i].index == i + 1);
  CHECK(build_stage_plan(small_plan({1, 2, 3}, 1), LlmMode::lora, 1).stages.size() == 3);
  StagePlan one = build_stage_plan(small_plan({1}, 1), LlmMode::lora, 1);
  REQUIRE(one.stages.size() == 1);
  CHECK(one.stages[0].trainable_groups == groups({Group::projector, Group::llm_bridge}));

  PlanConfig unknown = small_plan({1}, 1);
  unknown.groups[1] = {"decoder"};
  CHECK_THROWS_AS(build_stage_plan(unknown, LlmMode::lora, 1), ConfigError);
  PlanConfig body = small_plan({1}, 1);
  body.groups[1] = {"llm_body"};
  CHECK_THROWS_AS(build_stage_plan(body, LlmMode::lora, 1), ConfigError);
  CHECK_NOTHROW(build_stage_plan(body, LlmMode::full, 1));
  PlanConfig lora = small_plan({1}, 1);
  lora.groups[1] = {"lora"};
  CHECK_THROWS_AS(build_stage_plan(lora, LlmMode::full, 1), ConfigError);
  CHECK_THROWS_AS(build_stage_plan(small_plan({2, 1}, 1), LlmMode::lora, 1), ConfigError);
  CHECK_THROWS_AS(build_stage_plan(small_plan({}, 1), LlmMode::lora, 1), ConfigError);
  CHECK_THROWS_AS(build_stage_plan(small_plan({5}, 1), LlmMode::lora, 1), ConfigError);
}

TEST_CASE("checkpoints round trip bit-exactly") {
  SpeechLlm model(testing::tiny_model_config(), 3);
  fs::path dir = scratch_dir("checkpoint");
  CheckpointMeta meta;
  meta.step = 17;
  meta.config_hash = fnv1a_hex("x");
  meta.extra["note"] = "value";
  save_checkpoint(dir, model.store(), meta);
  Checkpoint back = read_checkpoint(dir);
  CHECK(back.meta.step == 17);
  CHECK(back.meta.extra.at("note") == "value");
  CHECK(changed_groups(back, read_checkpoint(dir)).empty());
  for (const Parameter& p : model.store().parameters()) {
    REQUIRE(back.tensors.count(p.name));
    CHECK(back.groups.at(p.name) == p.group);
    CHECK(std::memcmp(back.tensors.at(p.name).values().data(), p.tensor.values().data(),
                      p.tensor.numel() * sizeof(real)) == 0);
  }
}

TEST_CASE("each stage changes exactly its trainable groups") {
  const Dataset data = synth_corpus(testing::tiny_corpus_config(16));
  for (std::vector<int> stages : {std::vector<int>{1, 2, 3}, std::vector<int>{1, 2, 3, 4}}) {
    SpeechLlm model(testing::tiny_model_config(), 4);
    fs::path run = scratch_dir("freeze");
    save_checkpoint(run / "initial", model.store(), {});
    StagePlan plan = build_stage_plan(small_plan(stages, 3), LlmMode::lora, 4);
    auto results = run_plan(model, data, {data[0]}, plan, run);
    REQUIRE(results.size() == stages.size());
    Checkpoint previous = read_checkpoint(run / "initial");
    for (const StageResult& r : results) {
      Checkpoint current = read_checkpoint(run / ("stage" + std::to_string(r.spec.index)));
      CAPTURE(r.spec.index);
      CHECK(changed_groups(previous, current) == r.spec.trainable_groups);
      CHECK(r.metrics.losses.size() == 3);
      CHECK(current.meta.extra.at("loss_reduction") == "mean");
      previous = std::move(current);
    }
    CHECK(fs::exists(run / "metrics.jsonl"));
  }
}

TEST_CASE("zero steps or no trainable groups leave the model untouched") {
  const Dataset data = synth_corpus(testing::tiny_corpus_config(8));
  SpeechLlm model(testing::tiny_model_config(), 4);
  StateDict before = model.store().state();
  StagePlan plan = build_stage_plan(small_plan({1}, 0), LlmMode::lora, 4);
  StageMetrics m = run_stage(model, data, plan.stages[0], plan, {});
  CHECK(m.losses.empty());
  StageSpec empty{.index = 3, .trainable_groups = {}, .steps = 5};
  StageMetrics e = run_stage(model, data, empty, plan, {});
  CHECK(e.status == "skipped");
  for (const Parameter& p : model.store().parameters())
    CHECK(std::memcmp(before.at(p.name).values().data(), p.tensor.values().data(), p.tensor.numel() * sizeof(real)) ==
          0);
}

TEST_CASE("a non-finite loss aborts and keeps the last good parameters") {
  SpeechLlm model(testing::tiny_model_config(), 4);
  fs::path dir = scratch_dir("abort");
  StateDict before = model.store().state();
  TrainJob job;
  job.name = "stage1";
  job.stage = 1;
  job.groups = {Group::projector};
  job.steps = 2;
  job.accumulation = 1;
  job.n_items = 1;
  job.loss = [&](std::size_t) { return Tensor::scalar(NAN); };
  CHECK_THROWS_AS(run_job(model, job, TrainOutputs{.checkpoint_dir = dir}), NonFiniteLossError);
  Checkpoint saved = read_checkpoint(dir);
  CHECK(saved.meta.extra.at("status") == "aborted");
  CHECK(changed_groups(Checkpoint{before, saved.groups, {}}, saved).empty());
}

TEST_CASE("identical seeds give identical stage checkpoints and metrics") {
  const Dataset data = synth_corpus(testing::tiny_corpus_config(12));
  std::vector<std::string> logs;
  std::vector<Checkpoint> finals;
  for (int run = 0; run < 2; ++run) {
    SpeechLlm model(testing::tiny_model_config(), 9);
    fs::path dir = scratch_dir("determinism" + std::to_string(run));
    StagePlan plan = build_stage_plan(small_plan({1, 2}, 3), LlmMode::lora, 9);
    auto results = run_plan(model, data, {data[0], data[1]}, plan, dir);
    std::ostringstream losses;
    for (const auto& r : results)
      for (double l : r.metrics.losses) losses << l << ' ';
    logs.push_back(losses.str());
    finals.push_back(read_checkpoint(dir / "stage2"));
  }
  CHECK(logs[0] == logs[1]);
  CHECK(changed_groups(finals[0], finals[1]).empty());
}
