#include "speechllm/stages.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <cstring>

#include <nlohmann/json.hpp>

#include "speechllm/error.h"
#include "speechllm/evaluate.h"

namespace speechllm {

namespace fs = std::filesystem;

void StagePlan::validate() const {
  if (stages.empty()) throw ConfigError("stage plan is empty");
  int previous = 0;
  for (const StageSpec& s : stages) {
    if (s.index < 1 || s.index > 4) throw ConfigError("stage index " + std::to_string(s.index) + " outside 1..4");
    if (s.index <= previous) throw ConfigError("stage indices must be strictly increasing");
    if (s.steps < 0) throw ConfigError("stage " + std::to_string(s.index) + " has a negative step budget");
    previous = s.index;
  }
  if (accumulation < 1) throw ConfigError("accumulation must be >= 1");
  if (!(clip > 0)) throw ConfigError("clip value must be positive");
}

std::set<Group> canonical_groups(int index, LlmMode mode, bool stage4_lora) {
  switch (index) {
    case 1: return {Group::projector, Group::llm_bridge};
    case 2: return {Group::encoder};
    case 3:
      if (mode == LlmMode::lora) return {Group::lora};
      if (mode == LlmMode::full) return {Group::llm_body};
      return {};
    case 4: {
      std::set<Group> g = {Group::encoder, Group::projector, Group::llm_bridge};
      if (mode == LlmMode::lora && stage4_lora) g.insert(Group::lora);
      if (mode == LlmMode::full) g.insert(Group::llm_body);
      return g;
    }
  }
  throw ConfigError("stage index " + std::to_string(index) + " outside 1..4");
}

StagePlan build_stage_plan(const PlanConfig& config, LlmMode mode, std::uint64_t seed) {
  StagePlan plan;
  plan.optimizer = config.optimizer;
  plan.accumulation = config.accumulation;
  plan.clip = config.clip;
  plan.seed = seed;
  for (int index : config.stages) {
    StageSpec spec;
    spec.index = index;
    spec.llm_mode = mode;
    spec.trainable_groups = canonical_groups(index, mode, config.stage4_lora);
    if (auto it = config.groups.find(index); it != config.groups.end()) {
      spec.trainable_groups.clear();
      for (const std::string& name : it->second) spec.trainable_groups.insert(parse_group(name));
    }
    if (spec.trainable_groups.count(Group::llm_body) && mode != LlmMode::full) {
      throw ConfigError("stage " + std::to_string(index) + ": llm_body is trainable only in full llm mode");
    }
    if (spec.trainable_groups.count(Group::lora) && mode != LlmMode::lora) {
      throw ConfigError("stage " + std::to_string(index) + ": lora group requires llm mode lora");
    }
    auto steps = config.steps.find(index);
    spec.steps = steps == config.steps.end() ? 0 : steps->second;
    if (auto lr = config.lr.find(index); lr != config.lr.end()) spec.lr = lr->second;
    plan.stages.push_back(std::move(spec));
  }
  for (const auto& [index, _] : config.steps) {
    if (index < 1 || index > 4) throw ConfigError("step budget given for unknown stage " + std::to_string(index));
  }
  plan.validate();
  return plan;
}

void save_model(const fs::path& dir, const SpeechLlm& model, const CheckpointMeta& meta, const std::string& config_yaml) {
  save_checkpoint(dir, model.store(), meta);
  model.vocab().write_file(dir / "vocab.txt");
  if (!config_yaml.empty()) {
    std::ofstream out(dir / "config.yaml");
    out << config_yaml;
    if (!out) throw IoError("cannot write " + (dir / "config.yaml").string());
  }
}

StageMetrics run_job(SpeechLlm& model, const TrainJob& job, const TrainOutputs& out) {
  const auto start = std::chrono::steady_clock::now();
  StageMetrics metrics;
  metrics.name = job.name;
  ParameterStore& store = model.store();
  store.freeze_all();
  for (Group g : job.groups) store.set_trainable(g, true);

  const auto finish = [&](const std::string& status) {
    metrics.status = status;
    metrics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    store.freeze_all();
    if (!out.checkpoint_dir.empty()) {
      CheckpointMeta meta;
      meta.step = metrics.steps;
      meta.config_hash = out.config_yaml.empty() ? "" : fnv1a_hex(out.config_yaml);
      meta.extra["phase"] = job.name;
      meta.extra["status"] = status;
      meta.extra["loss_reduction"] = "mean";
      meta.extra["template"] = "prompt+speech+transcript,no-separators";
      std::string groups;
      for (Group g : job.groups) groups += (groups.empty() ? "" : ",") + std::string(group_name(g));
      meta.extra["trainable"] = groups.empty() ? "-" : groups;
      save_model(out.checkpoint_dir, model, meta, out.config_yaml);
    }
  };

  if (job.steps == 0 || store.trainable_parameter_count() == 0) {
    finish(job.steps == 0 ? "ok" : "skipped");
    return metrics;
  }
  if (job.n_items == 0) throw ConfigError(job.name + ": no training items");

  AdamW optimizer(job.optimizer);
  Rng rng(component_seed(job.shuffle_seed, job.name));
  std::vector<std::size_t> order(job.n_items);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  for (long step = 0; step < job.steps; ++step) {
    StepResult result;
    try {
      result = accumulate_and_step(store, optimizer, job.accumulation, [&](int) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        return job.loss(order[cursor++]);
      }, job.clip);
    } catch (const NonFiniteLossError&) {
      finish("aborted");
      throw;
    }
    ++metrics.steps;
    metrics.losses.push_back(result.mean_loss);
    if (out.metrics) {
      nlohmann::json line = {{"phase", job.name}, {"stage", job.stage}, {"step", metrics.steps},
                             {"loss", result.mean_loss}, {"lr", job.optimizer.lr}};
      *out.metrics << line.dump() << '\n';
    }
    if (out.log && (metrics.steps % 25 == 0 || metrics.steps == job.steps)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s step %ld/%ld loss %.4f", job.name.c_str(), metrics.steps, job.steps,
                    result.mean_loss);
      out.log(buf);
    }
  }
  if (out.metrics) out.metrics->flush();
  finish("ok");
  return metrics;
}

StageMetrics run_stage(SpeechLlm& model, const Dataset& train, const StageSpec& spec, const StagePlan& plan,
                       const TrainOutputs& out) {
  TrainJob job;
  job.name = "stage" + std::to_string(spec.index);
  job.stage = spec.index;
  job.groups = spec.trainable_groups;
  job.steps = spec.steps;
  job.optimizer = plan.optimizer;
  if (spec.lr) job.optimizer.lr = *spec.lr;
  job.accumulation = plan.accumulation;
  job.clip = plan.clip;
  job.shuffle_seed = plan.seed;
  job.n_items = train.size();
  job.loss = [&](std::size_t i) { return model.transcript_loss(train[i]); };
  return run_job(model, job, out);
}

std::vector<StageResult> run_plan(SpeechLlm& model, const Dataset& train, const Dataset& heldout,
                                  const StagePlan& plan, const fs::path& run_dir, const std::string& config_yaml,
                                  const std::function<void(const std::string&)>& log) {
  plan.validate();
  std::ofstream metrics;
  if (!run_dir.empty()) {
    fs::create_directories(run_dir);
    metrics.open(run_dir / "metrics.jsonl", std::ios::app);
    if (!metrics) throw IoError("cannot open " + (run_dir / "metrics.jsonl").string());
  }
  std::vector<StageResult> results;
  for (const StageSpec& spec : plan.stages) {
    TrainOutputs out;
    out.config_yaml = config_yaml;
    out.log = log;
    if (!run_dir.empty()) {
      out.checkpoint_dir = run_dir / ("stage" + std::to_string(spec.index));
      out.metrics = &metrics;
    }
    StageResult result{spec, run_stage(model, train, spec, plan, out), {}};
    if (!heldout.empty()) {
      result.report = evaluate(model, heldout);
      if (!run_dir.empty()) {
        std::ofstream txt(out.checkpoint_dir / "report.txt");
        txt << result.report.to_table();
        std::ofstream js(out.checkpoint_dir / "report.json");
        js << result.report.to_json(true).dump(2) << '\n';
      }
      if (log) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "stage%d held-out CER %.2f%% (%ld steps, %.0f s)", spec.index,
                      100.0 * result.report.overall_cer(), result.metrics.steps, result.metrics.seconds);
        log(buf);
      }
    }
    results.push_back(std::move(result));
  }
  return results;
}

StageMetrics pretrain_llm(SpeechLlm& model, const std::vector<std::string>& texts, long steps, const StagePlan& plan,
                          double lr, const TrainOutputs& out) {
  TrainJob job;
  job.name = "llm_pretrain";
  job.groups = {Group::llm_body};
  job.steps = steps;
  job.optimizer = plan.optimizer;
  job.optimizer.lr = lr;
  job.accumulation = plan.accumulation;
  job.clip = plan.clip;
  job.shuffle_seed = plan.seed;
  job.n_items = texts.size();
  job.loss = [&](std::size_t i) { return model.relay_loss(texts[i]); };
  return run_job(model, job, out);
}

StageMetrics ctc_finetune(SpeechLlm& model, const Dataset& train, long steps, const StagePlan& plan, double lr,
                          const TrainOutputs& out) {
  TrainJob job;
  job.name = "ctc_finetune";
  job.groups = {Group::encoder, Group::ctc_head};
  job.steps = steps;
  job.optimizer = plan.optimizer;
  job.optimizer.lr = lr;
  job.accumulation = plan.accumulation;
  job.clip = plan.clip;
  job.shuffle_seed = plan.seed;
  job.n_items = train.size();
  job.loss = [&](std::size_t i) { return model.ctc_loss(train[i]); };
  return run_job(model, job, out);
}

std::set<Group> changed_groups(const Checkpoint& before, const Checkpoint& after) {
  std::set<Group> changed;
  for (const auto& [name, tensor] : after.tensors) {
    auto it = before.tensors.find(name);
    const Group group = after.groups.at(name);
    if (it == before.tensors.end() || it->second.shape() != tensor.shape()) {
      changed.insert(group);
      continue;
    }
    const auto a = it->second.values(), b = tensor.values();
    if (!std::equal(a.begin(), a.end(), b.begin(), b.end(), [](real x, real y) {
          return std::memcmp(&x, &y, sizeof(real)) == 0;
        })) {
      changed.insert(group);
    }
  }
  return changed;
}

}  // namespace speechllm
