#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechllm/pipeline.h"

namespace speechllm {

enum class SweepKind { projector, rate, ctc, stages };
SweepKind parse_sweep_kind(std::string_view name);  // UsageError if unknown
std::string_view sweep_kind_name(SweepKind kind);

struct SweepTable {
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_text() const;
  nlohmann::json to_json() const;
};

// Runs every cell of the sweep under <out>/<kind>/<cell>/ and writes
// <out>/<kind>/table.{txt,json}. Cells share the data, the seed and the
// pre-stage phases (cached under <out>/shared/).
//   projector: stage-1 CER per projector kind and dialect
//   rate:      stage-1 CER per projector kind and frame rate
//   ctc:       stage-1 CER per projector kind, plain vs CTC-finetuned encoder
//   stages:    CER after each stage of the plan for linear and conv1d
SweepTable run_sweep(SweepKind kind, const RunConfig& base, const std::filesystem::path& out, const LogFn& log = {});

}  // namespace speechllm
