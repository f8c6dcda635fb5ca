#include "speechllm/sweep.h"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "speechllm/error.h"

namespace speechllm {

namespace fs = std::filesystem;

SweepKind parse_sweep_kind(std::string_view name) {
  if (name == "projector") return SweepKind::projector;
  if (name == "rate") return SweepKind::rate;
  if (name == "ctc") return SweepKind::ctc;
  if (name == "stages") return SweepKind::stages;
  throw UsageError("unknown sweep kind '" + std::string(name) + "' (expected projector, rate, ctc or stages)");
}

std::string_view sweep_kind_name(SweepKind kind) {
  switch (kind) {
    case SweepKind::projector: return "projector";
    case SweepKind::rate: return "rate";
    case SweepKind::ctc: return "ctc";
    case SweepKind::stages: return "stages";
  }
  return "?";
}

std::string SweepTable::to_text() const {
  std::vector<std::size_t> width(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    width[c] = columns[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  std::string out = title + "\n";
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out += cells[c];
      if (c + 1 < cells.size()) out += std::string(width[c] - cells[c].size() + 2, ' ');
    }
    out += '\n';
  };
  line(columns);
  std::size_t total = 0;
  for (std::size_t w : width) total += w + 2;
  out += std::string(total > 2 ? total - 2 : 0, '-') + "\n";
  for (const auto& row : rows) line(row);
  return out;
}

nlohmann::json SweepTable::to_json() const {
  nlohmann::json j = {{"title", title}, {"columns", columns}, {"rows", nlohmann::json::array()}};
  for (const auto& row : rows) j["rows"].push_back(row);
  return j;
}

namespace {

std::string percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * rate);
  return buf;
}

std::string rate_label(const ProjectorConfig& p) {
  if (p.kind == ProjectorKind::qformer) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%gHz", kEncoderFrameRateHz / p.downsample);
  return buf;
}

std::vector<std::string> dialect_tags(const PreparedData& data) {
  std::vector<std::string> tags;
  for (const Utterance& u : data.test) {
    if (std::find(tags.begin(), tags.end(), u.dialect) == tags.end()) tags.push_back(u.dialect);
  }
  std::sort(tags.begin(), tags.end());
  return tags;
}

std::vector<std::string> report_cells(const CerReport& report, const std::vector<std::string>& tags) {
  std::vector<std::string> cells;
  for (const std::string& tag : tags) {
    auto it = report.by_dialect().find(tag);
    cells.push_back(it == report.by_dialect().end() ? "-" : percent(it->second.rate()));
  }
  cells.push_back(percent(report.overall_cer()));
  return cells;
}

}  // namespace

SweepTable run_sweep(SweepKind kind, const RunConfig& base, const fs::path& out, const LogFn& log) {
  base.validate();
  const PreparedData data = prepare_data(base);
  const std::vector<std::string> tags = dialect_tags(data);
  const fs::path dir = out / std::string(sweep_kind_name(kind));
  SharedPhases shared{out / "shared" / "llm_pretrain", out / "shared" / "ctc_finetune"};

  const auto cell = [&](RunConfig config, const std::string& name) {
    config.out = (dir / name).string();
    if (log) log("sweep cell " + name);
    return train_model(config, data, dir / name, shared, log);
  };
  const auto stage1 = [&](ProjectorKind k, int downsample) {
    RunConfig c = base;
    c.training.stages = {1};
    c.model.projector.kind = k;
    c.model.projector.downsample = downsample;
    return c;
  };

  SweepTable table;
  const ProjectorKind projector_order[] = {ProjectorKind::conv1d, ProjectorKind::linear, ProjectorKind::transformer,
                                       ProjectorKind::qformer};
  switch (kind) {
    case SweepKind::projector: {
      table.title = "CER (%) after the first training stage by projection layer";
      table.columns = {"Projector", "Frame Rate"};
      for (const std::string& t : tags) table.columns.push_back(t);
      table.columns.push_back("overall");
      for (ProjectorKind k : projector_order) {
        RunConfig c = stage1(k, base.model.projector.downsample);
        c.pretrain.ctc_steps = 0;
        const TrainSummary s = cell(c, std::string(projector_kind_name(k)));
        std::vector<std::string> row = {std::string(projector_kind_name(k)), rate_label(c.model.projector)};
        for (std::string& v : report_cells(s.stages.back().report, tags)) row.push_back(std::move(v));
        table.rows.push_back(std::move(row));
      }
      break;
    }
    case SweepKind::ctc: {
      table.title = "CER (%) after the first training stage: plain vs CTC-finetuned encoder";
      table.columns = {"Projector", "Frame Rate", "Pretrained", "Finetuned"};
      const long ctc_steps = base.pretrain.ctc_steps > 0 ? base.pretrain.ctc_steps : 100;
      for (ProjectorKind k : projector_order) {
        RunConfig plain = stage1(k, base.model.projector.downsample);
        plain.pretrain.ctc_steps = 0;
        RunConfig tuned = plain;
        tuned.pretrain.ctc_steps = ctc_steps;
        const std::string name(projector_kind_name(k));
        const TrainSummary a = cell(plain, name + "-pretrained");
        const TrainSummary b = cell(tuned, name + "-finetuned");
        table.rows.push_back({name, rate_label(plain.model.projector), percent(a.stages.back().report.overall_cer()),
                              percent(b.stages.back().report.overall_cer())});
      }
      break;
    }
    case SweepKind::rate: {
      table.title = "CER (%) after the first training stage by projector and LLM-input frame rate";
      const int rates[] = {1, 2, 4, 8};
      table.columns = {"Projector"};
      for (int k : rates) table.columns.push_back(rate_label(ProjectorConfig{ProjectorKind::linear, k}));
      for (ProjectorKind kind_ : {ProjectorKind::conv1d, ProjectorKind::linear, ProjectorKind::transformer}) {
        std::vector<std::string> row = {std::string(projector_kind_name(kind_))};
        for (int k : rates) {
          RunConfig c = stage1(kind_, k);
          c.pretrain.ctc_steps = 0;
          const TrainSummary s = cell(c, std::string(projector_kind_name(kind_)) + "-k" + std::to_string(k));
          row.push_back(percent(s.stages.back().report.overall_cer()));
        }
        table.rows.push_back(std::move(row));
      }
      break;
    }
    case SweepKind::stages: {
      table.title = "CER (%) after each training stage";
      table.columns = {"Stage", "Projector"};
      for (const std::string& t : tags) table.columns.push_back(t);
      table.columns.push_back("overall");
      std::vector<std::pair<ProjectorKind, TrainSummary>> runs;
      for (ProjectorKind k : {ProjectorKind::linear, ProjectorKind::conv1d}) {
        RunConfig c = base;
        c.model.projector.kind = k;
        runs.emplace_back(k, cell(c, std::string(projector_kind_name(k))));
      }
      for (std::size_t i = 0; i < runs.front().second.stages.size(); ++i) {
        for (const auto& [k, summary] : runs) {
          const StageResult& r = summary.stages[i];
          std::vector<std::string> row = {std::to_string(r.spec.index), std::string(projector_kind_name(k))};
          for (std::string& v : report_cells(r.report, tags)) row.push_back(std::move(v));
          table.rows.push_back(std::move(row));
        }
      }
      break;
    }
  }

  fs::create_directories(dir);
  std::ofstream(dir / "table.txt") << table.to_text();
  std::ofstream(dir / "table.json") << table.to_json().dump(2) << '\n';
  return table;
}

}  // namespace speechllm
