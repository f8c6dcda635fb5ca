#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "speechllm/config.h"
#include "speechllm/stages.h"

namespace speechllm {

struct PreparedData {
  Dataset train, dev, test;
};

// Synthetic corpus split by the configured fractions, or the configured
// manifests.
PreparedData prepare_data(const RunConfig& config);

// Held-out set used for evaluation (test split, limited by data.eval_limit).
Dataset heldout_set(const RunConfig& config, const PreparedData& data);

// Optional shared directories for the expensive pre-stage phases. A phase
// whose directory holds a checkpoint with a matching key is loaded instead of
// recomputed, so sweep cells can share them.
struct SharedPhases {
  std::filesystem::path llm_pretrain;
  std::filesystem::path ctc_finetune;
};

struct TrainSummary {
  std::optional<StageMetrics> llm_pretrain;
  std::optional<StageMetrics> ctc_finetune;
  std::vector<StageResult> stages;
  double seconds = 0;
};

using LogFn = std::function<void(const std::string&)>;

// Pre-stage phases, then the stage plan. Writes <out>/config.yaml,
// metrics.jsonl, stage checkpoints and reports, and summary.{txt,json}.
TrainSummary train_model(const RunConfig& config, const PreparedData& data, const std::filesystem::path& out,
                         const SharedPhases& shared = {}, const LogFn& log = {});

// Rebuilds a model from a checkpoint directory (config.yaml + parameters).
std::unique_ptr<SpeechLlm> load_model(const std::filesystem::path& checkpoint_dir);

// Copies the tensors of the given groups from a checkpoint into the store.
void load_groups(const Checkpoint& checkpoint, ParameterStore& store, const std::set<Group>& groups);

std::string summary_table(const TrainSummary& summary);

}  // namespace speechllm
