#include "speechllm/pipeline.h"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "speechllm/error.h"
#include "speechllm/manifest.h"

namespace speechllm {

namespace fs = std::filesystem;

PreparedData prepare_data(const RunConfig& config) {
  PreparedData data;
  if (!config.data.train_manifest.empty()) {
    data.train = read_manifest(config.data.train_manifest);
    data.dev = read_manifest(config.data.dev_manifest);
    data.test = read_manifest(config.data.test_manifest);
    return data;
  }
  CorpusSplit split = split_corpus(synth_corpus(config.corpus), config.data.dev_fraction, config.data.test_fraction);
  data.train = std::move(split.train);
  data.dev = std::move(split.dev);
  data.test = std::move(split.test);
  return data;
}

Dataset heldout_set(const RunConfig& config, const PreparedData& data) {
  Dataset held = data.test;
  if (config.data.eval_limit > 0 && static_cast<std::size_t>(config.data.eval_limit) < held.size()) {
    held.resize(static_cast<std::size_t>(config.data.eval_limit));
  }
  return held;
}

void load_groups(const Checkpoint& checkpoint, ParameterStore& store, const std::set<Group>& groups) {
  StateDict state = store.state();
  for (const Parameter& p : store.parameters()) {
    if (!groups.count(p.group)) continue;
    auto it = checkpoint.tensors.find(p.name);
    if (it == checkpoint.tensors.end()) throw ContractViolation("checkpoint lacks parameter " + p.name);
    state[p.name] = it->second;
  }
  store.load_state(state);
}

namespace {

// Key identifying everything that determines a pre-stage phase's result.
std::string phase_key(RunConfig c, const std::string& phase) {
  c.out.clear();
  c.training = PlanConfig{};
  c.training.stages = {1};
  c.data.eval_limit = 0;
  c.model.projector = ProjectorConfig{};
  c.model.max_decode_len = 1;
  if (phase == "llm_pretrain") {
    c.pretrain.ctc_steps = 0;
    c.model.encoder = EncoderConfig{};
  } else {
    c.pretrain.llm_steps = 0;
    c.model.llm = LlmConfig{};
    c.model.lora = LoraConfig{};
  }
  return fnv1a_hex(phase + "\n" + to_yaml(c));
}

bool try_load_phase(const fs::path& dir, const std::string& key, ParameterStore& store, const std::set<Group>& groups) {
  if (dir.empty() || !fs::exists(dir / "meta.txt")) return false;
  Checkpoint ck = read_checkpoint(dir);
  auto it = ck.meta.extra.find("phase_key");
  if (it == ck.meta.extra.end() || it->second != key) return false;
  load_groups(ck, store, groups);
  return true;
}

void save_phase(const fs::path& dir, const SpeechLlm& model, const StageMetrics& m, const std::string& key,
                const std::string& yaml) {
  CheckpointMeta meta;
  meta.step = m.steps;
  meta.config_hash = fnv1a_hex(yaml);
  meta.extra["phase"] = m.name;
  meta.extra["status"] = m.status;
  meta.extra["phase_key"] = key;
  save_model(dir, model, meta, yaml);
}

nlohmann::json metrics_json(const StageMetrics& m) {
  return {{"name", m.name},
          {"steps", m.steps},
          {"status", m.status},
          {"seconds", m.seconds},
          {"final_loss", m.losses.empty() ? nlohmann::json(nullptr) : nlohmann::json(m.losses.back())}};
}

}  // namespace

TrainSummary train_model(const RunConfig& config, const PreparedData& data, const fs::path& out,
                         const SharedPhases& shared, const LogFn& log) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  const std::string yaml = to_yaml(config);
  fs::create_directories(out);
  {
    std::ofstream snapshot(out / "config.yaml");
    snapshot << yaml;
    if (!snapshot) throw IoError("cannot write " + (out / "config.yaml").string());
  }
  // Start metrics afresh for this run directory.
  std::ofstream(out / "metrics.jsonl", std::ios::trunc);

  SpeechLlm model(resolved_model_config(config), config.seed);
  const StagePlan plan = plan_for(config);
  TrainSummary summary;

  const auto phase = [&](const std::string& name, long steps, const fs::path& shared_dir, const std::set<Group>& groups,
                         const std::function<StageMetrics(const TrainOutputs&)>& train) -> std::optional<StageMetrics> {
    if (steps == 0) return std::nullopt;
    const std::string key = phase_key(config, name);
    if (try_load_phase(shared_dir, key, model.store(), groups)) {
      if (log) log(name + ": loaded from " + shared_dir.string());
      StageMetrics m;
      m.name = name;
      m.status = "cached";
      return m;
    }
    std::ofstream metrics(out / "metrics.jsonl", std::ios::app);
    TrainOutputs outputs;
    outputs.metrics = &metrics;
    outputs.log = log;
    StageMetrics m = train(outputs);
    save_phase(out / name, model, m, key, yaml);
    if (!shared_dir.empty()) save_phase(shared_dir, model, m, key, yaml);
    return m;
  };

  std::vector<std::string> texts;
  texts.reserve(data.train.size());
  for (const Utterance& u : data.train) texts.push_back(u.transcript);
  summary.llm_pretrain = phase("llm_pretrain", config.pretrain.llm_steps, shared.llm_pretrain, {Group::llm_body},
                               [&](const TrainOutputs& o) {
                                 return pretrain_llm(model, texts, config.pretrain.llm_steps, plan,
                                                     config.pretrain.llm_lr, o);
                               });
  summary.ctc_finetune = phase("ctc_finetune", config.pretrain.ctc_steps, shared.ctc_finetune,
                               {Group::encoder, Group::ctc_head}, [&](const TrainOutputs& o) {
                                 return ctc_finetune(model, data.train, config.pretrain.ctc_steps, plan,
                                                     config.pretrain.ctc_lr, o);
                               });

  summary.stages = run_plan(model, data.train, heldout_set(config, data), plan, out, yaml, log);
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  nlohmann::json js;
  js["seconds"] = summary.seconds;
  if (summary.llm_pretrain) js["llm_pretrain"] = metrics_json(*summary.llm_pretrain);
  if (summary.ctc_finetune) js["ctc_finetune"] = metrics_json(*summary.ctc_finetune);
  for (const StageResult& r : summary.stages) {
    nlohmann::json stage = metrics_json(r.metrics);
    stage["index"] = r.spec.index;
    std::vector<std::string> groups;
    for (Group g : r.spec.trainable_groups) groups.emplace_back(group_name(g));
    stage["trainable_groups"] = groups;
    stage["report"] = r.report.to_json();
    js["stages"].push_back(stage);
  }
  std::ofstream(out / "summary.json") << js.dump(2) << '\n';
  std::ofstream(out / "summary.txt") << summary_table(summary);
  return summary;
}

std::string summary_table(const TrainSummary& summary) {
  std::set<std::string> dialects;
  for (const StageResult& r : summary.stages) {
    for (const auto& [tag, _] : r.report.by_dialect()) dialects.insert(tag);
  }
  std::string out;
  char cell[64];
  std::snprintf(cell, sizeof cell, "%-6s %-40s %7s", "stage", "trainable", "steps");
  out += cell;
  for (const std::string& d : dialects) {
    std::snprintf(cell, sizeof cell, " %10s", d.c_str());
    out += cell;
  }
  out += "    overall\n";
  for (const StageResult& r : summary.stages) {
    std::string groups;
    for (Group g : r.spec.trainable_groups) groups += (groups.empty() ? "" : ",") + std::string(group_name(g));
    std::snprintf(cell, sizeof cell, "%-6d %-40s %7ld", r.spec.index, groups.empty() ? "-" : groups.c_str(),
                  r.metrics.steps);
    out += cell;
    for (const std::string& d : dialects) {
      auto it = r.report.by_dialect().find(d);
      std::snprintf(cell, sizeof cell, " %10.2f", it == r.report.by_dialect().end() ? 0.0 : 100.0 * it->second.rate());
      out += cell;
    }
    std::snprintf(cell, sizeof cell, " %10.2f\n",
                  r.report.overall().ref_length ? 100.0 * r.report.overall_cer() : 0.0);
    out += cell;
  }
  return out;
}

std::unique_ptr<SpeechLlm> load_model(const fs::path& checkpoint_dir) {
  if (!fs::exists(checkpoint_dir / "meta.txt")) {
    throw IoError("no checkpoint at " + checkpoint_dir.string() + " (meta.txt missing)");
  }
  const RunConfig config = load_run_config(checkpoint_dir / "config.yaml");
  auto model = std::make_unique<SpeechLlm>(resolved_model_config(config), config.seed);
  const Vocabulary saved = Vocabulary::read_file(checkpoint_dir / "vocab.txt");
  if (!(saved == model->vocab())) throw ContractViolation("checkpoint vocabulary differs from its configuration");
  load_checkpoint(checkpoint_dir, model->store());
  return model;
}

}  // namespace speechllm
