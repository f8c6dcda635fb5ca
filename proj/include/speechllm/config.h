#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "speechllm/corpus.h"
#include "speechllm/model.h"
#include "speechllm/stages.h"

namespace speechllm {

struct DataConfig {
  double dev_fraction = 0.1;
  double test_fraction = 0.1;
  // Manifests to use instead of the synthetic corpus (all three or none).
  std::string train_manifest;
  std::string dev_manifest;
  std::string test_manifest;
  int eval_limit = 0;  // evaluate on the first N held-out utterances (0 = all)
};

struct PretrainConfig {
  long llm_steps = 0;  // relay-task pretraining of the LLM before stage 1
  double llm_lr = 2e-3;
  long ctc_steps = 0;  // CTC fine-tuning of the encoder before stage 1
  double ctc_lr = 1e-3;
};

struct RunConfig {
  std::uint64_t seed = 1;
  CorpusConfig corpus;
  DataConfig data;
  ModelConfig model;
  PretrainConfig pretrain;
  PlanConfig training;
  std::string out = "runs/default";

  // Cross-field checks; throws ConfigError.
  void validate() const;
};

// Defaults tuned for the single-core toy benchmark.
RunConfig default_run_config();

// Reads YAML over the defaults. Unknown keys and malformed values raise
// ConfigError naming the key path.
RunConfig parse_run_config(const std::string& yaml_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Fully resolved YAML; parse_run_config(to_yaml(c)) reproduces c.
std::string to_yaml(const RunConfig& config);

// Model configuration with the feature width taken from the corpus.
ModelConfig resolved_model_config(const RunConfig& config);
StagePlan plan_for(const RunConfig& config);

}  // namespace speechllm
