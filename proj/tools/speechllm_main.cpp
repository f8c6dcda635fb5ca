// Command-line entry point: generate | train | evaluate | sweep.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "speechllm/config.h"
#include "speechllm/error.h"
#include "speechllm/evaluate.h"
#include "speechllm/manifest.h"
#include "speechllm/pipeline.h"
#include "speechllm/sweep.h"

namespace fs = std::filesystem;
using namespace speechllm;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string stages;
  std::string projector;
  std::optional<int> downsample;
  std::string llm_mode;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool training_flags) {
  cmd->add_option("--config", f.config, "YAML run configuration");
  cmd->add_option("--seed", f.seed, "Seed for data, initialisation and shuffling");
  cmd->add_option("--out", f.out, "Output directory");
  if (!training_flags) return;
  cmd->add_option("--stages", f.stages, "Comma-separated stage list, e.g. 1,2,3");
  cmd->add_option("--projector", f.projector, "linear | conv1d | transformer | qformer");
  cmd->add_option("--downsample", f.downsample, "Projector downsampling rate (1, 2, 4, 8)");
  cmd->add_option("--llm-mode", f.llm_mode, "lora | full | frozen");
}

std::vector<int> parse_stage_list(const std::string& text) {
  std::vector<int> stages;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      stages.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--stages expects a comma-separated list of integers, got '" + text + "'");
    }
  }
  if (stages.empty()) throw UsageError("--stages is empty");
  return stages;
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig c = f.config.empty() ? default_run_config() : load_run_config(f.config);
  if (f.seed) {
    c.seed = *f.seed;
    c.corpus.seed = *f.seed;
  }
  if (!f.stages.empty()) c.training.stages = parse_stage_list(f.stages);
  if (!f.projector.empty()) c.model.projector.kind = parse_projector_kind(f.projector);
  if (f.downsample) c.model.projector.downsample = *f.downsample;
  if (!f.llm_mode.empty()) c.model.llm_mode = parse_llm_mode(f.llm_mode);
  if (!f.out.empty()) c.out = f.out;
  c.validate();
  return c;
}

void log_line(const std::string& message) { std::cerr << message << std::endl; }

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

int cmd_generate(const CommonFlags& f) {
  const RunConfig c = resolve(f);
  const PreparedData data = prepare_data(c);
  const fs::path out = c.out;
  write_manifest(out / "train.jsonl", data.train);
  write_manifest(out / "dev.jsonl", data.dev);
  write_manifest(out / "test.jsonl", data.test);
  write_file(out / "config.yaml", to_yaml(c));
  std::cout << "wrote " << data.train.size() << " / " << data.dev.size() << " / " << data.test.size()
            << " utterances (train / dev / test) to " << out.string() << '\n';
  return 0;
}

int cmd_train(const CommonFlags& f) {
  const RunConfig c = resolve(f);
  const PreparedData data = prepare_data(c);
  const TrainSummary summary = train_model(c, data, c.out, {}, log_line);
  std::cout << summary_table(summary);
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& manifest, const std::string& out) {
  const auto model = load_model(checkpoint);
  const Dataset data = read_manifest(manifest);
  const CerReport report = evaluate(*model, data);
  const std::string table = report.to_table();
  std::cout << table;
  if (!out.empty()) {
    write_file(fs::path(out) / "report.txt", table);
    write_file(fs::path(out) / "report.json", report.to_json(true).dump(2) + "\n");
  }
  return 0;
}

int cmd_sweep(const std::string& kind_name, const CommonFlags& f) {
  const SweepKind kind = parse_sweep_kind(kind_name);
  const RunConfig c = resolve(f);
  const SweepTable table = run_sweep(kind, c, c.out, log_line);
  std::cout << table.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-to-text with a projector-bridged decoder LLM, trained in stages"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, sweep_flags;
  CLI::App* gen = app.add_subcommand("generate", "Write train/dev/test manifests of the synthetic corpus");
  add_common(gen, gen_flags, false);

  CLI::App* train = app.add_subcommand("train", "Run the staged training plan");
  add_common(train, train_flags, true);

  std::string checkpoint, manifest, report_out;
  CLI::App* eval = app.add_subcommand("evaluate", "Score a checkpoint on a manifest");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--manifest", manifest, "Manifest (JSON lines)")->required();
  eval->add_option("--out", report_out, "Directory for report.txt / report.json");

  std::string sweep_kind;
  CLI::App* sweep = app.add_subcommand("sweep", "Ablation sweep: projector | rate | ctc | stages");
  sweep->add_option("kind", sweep_kind, "Sweep axis")->required();
  add_common(sweep, sweep_flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(gen_flags);
    if (*train) return cmd_train(train_flags);
    if (*eval) return cmd_evaluate(checkpoint, manifest, report_out);
    if (*sweep) return cmd_sweep(sweep_kind, sweep_flags);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
