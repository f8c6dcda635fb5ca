#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "speechllm/cer.h"
#include "speechllm/checkpoint.h"
#include "speechllm/model.h"
#include "speechllm/optim.h"

namespace speechllm {

struct StageSpec {
  int index = 1;
  std::set<Group> trainable_groups;
  long steps = 0;
  std::optional<double> lr;
  LlmMode llm_mode = LlmMode::lora;
};

struct StagePlan {
  std::vector<StageSpec> stages;
  AdamWConfig optimizer;
  int accumulation = 20;
  real clip = kDefaultClipValue;
  std::uint64_t seed = 1;

  // Nonempty, indices strictly increasing within 1..4.
  void validate() const;
};

struct PlanConfig {
  std::vector<int> stages = {1, 2, 3, 4};
  std::map<int, long> steps;                          // per stage; missing = 0
  std::map<int, double> lr;                           // per-stage overrides
  std::map<int, std::vector<std::string>> groups;     // per-stage group overrides
  bool stage4_lora = true;
  AdamWConfig optimizer;
  int accumulation = 20;
  real clip = kDefaultClipValue;
};

// Canonical trainable groups of stage 1..4 under the given LLM mode.
std::set<Group> canonical_groups(int index, LlmMode mode, bool stage4_lora = true);

// Throws ConfigError for unknown stages or groups, and for llm_body outside
// full mode or lora outside lora mode.
StagePlan build_stage_plan(const PlanConfig& config, LlmMode mode, std::uint64_t seed);

struct StageMetrics {
  std::string name;  // "stage1".., "llm_pretrain", "ctc_finetune"
  long steps = 0;
  std::vector<double> losses;  // one mean loss per optimizer step
  std::string status = "ok";   // ok | skipped | aborted
  double seconds = 0;
};

// Where a training job writes. Everything is optional.
struct TrainOutputs {
  std::filesystem::path checkpoint_dir;
  std::ostream* metrics = nullptr;  // JSON lines: phase, stage, step, loss, lr
  std::string config_yaml;          // copied into each checkpoint directory
  std::function<void(const std::string&)> log;
};

// One optimisation phase: `steps` updates of the given groups, each
// averaging `accumulation` per-item losses drawn from a seeded shuffle of
// [0, n_items). Optimizer state starts fresh.
struct TrainJob {
  std::string name;
  int stage = 0;
  std::set<Group> groups;
  long steps = 0;
  AdamWConfig optimizer;
  int accumulation = 20;
  real clip = kDefaultClipValue;
  std::uint64_t shuffle_seed = 1;
  std::size_t n_items = 0;
  std::function<Tensor(std::size_t)> loss;
};

// Trains, then writes a checkpoint (if requested) with status in its meta.
// On a non-finite loss the untouched parameters are checkpointed with
// status "aborted" and NonFiniteLossError is rethrown.
StageMetrics run_job(SpeechLlm& model, const TrainJob& job, const TrainOutputs& out);

StageMetrics run_stage(SpeechLlm& model, const Dataset& train, const StageSpec& spec, const StagePlan& plan,
                       const TrainOutputs& out);

struct StageResult {
  StageSpec spec;
  StageMetrics metrics;
  CerReport report;
};

// Runs the stages in order, evaluating on `heldout` after each. With a run
// directory, stage k goes to <run_dir>/stage<k>/ (checkpoint plus
// report.txt / report.json) and per-step metrics to <run_dir>/metrics.jsonl.
std::vector<StageResult> run_plan(SpeechLlm& model, const Dataset& train, const Dataset& heldout,
                                  const StagePlan& plan, const std::filesystem::path& run_dir,
                                  const std::string& config_yaml = {},
                                  const std::function<void(const std::string&)>& log = {});

// Text-only pretraining of llm_body on the relay task.
StageMetrics pretrain_llm(SpeechLlm& model, const std::vector<std::string>& texts, long steps,
                          const StagePlan& plan, double lr, const TrainOutputs& out);

// Encoder + CTC head trained with CTC loss (the ASR-finetuned encoder).
StageMetrics ctc_finetune(SpeechLlm& model, const Dataset& train, long steps, const StagePlan& plan, double lr,
                          const TrainOutputs& out);

// Saves parameters plus config.yaml and vocab.txt.
void save_model(const std::filesystem::path& dir, const SpeechLlm& model, const CheckpointMeta& meta,
                const std::string& config_yaml);

// Group of every tensor that differs bitwise between two checkpoints.
std::set<Group> changed_groups(const Checkpoint& before, const Checkpoint& after);

}  // namespace speechllm
