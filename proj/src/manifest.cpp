#include "speechllm/manifest.h"

#include <nlohmann/json.hpp>

#include "speechllm/checkpoint.h"
#include "speechllm/error.h"

namespace speechllm {

namespace fs = std::filesystem;
using nlohmann::json;

ManifestReader::ManifestReader(const fs::path& path) : path_(path), base_(path.parent_path()), in_(path) {
  if (!in_) throw IoError("cannot open manifest " + path.string());
}

namespace {

[[noreturn]] void fail(const fs::path& path, int line, const std::string& field, const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": field '" + field + "': " + what);
}

std::string string_field(const json& record, const char* name, const fs::path& path, int line) {
  auto it = record.find(name);
  if (it == record.end()) fail(path, line, name, "missing");
  if (!it->is_string()) fail(path, line, name, "expected a string");
  return it->get<std::string>();
}

}  // namespace

std::optional<Utterance> ManifestReader::next() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;

    json record;
    try {
      record = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(path_.string() + ":" + std::to_string(line_) + ": invalid JSON: " + e.what());
    }
    if (!record.is_object()) fail(path_, line_, "<record>", "expected a JSON object");

    Utterance utt;
    utt.transcript = string_field(record, "transcript", path_, line_);
    if (utt.transcript.empty()) fail(path_, line_, "transcript", "must not be empty");
    utt.dialect = string_field(record, "dialect", path_, line_);
    utt.id = record.contains("id") ? string_field(record, "id", path_, line_) : "line-" + std::to_string(line_);

    double rate = kInputFrameRateHz;
    if (auto it = record.find("frame_rate_hz"); it != record.end()) {
      if (!it->is_number()) fail(path_, line_, "frame_rate_hz", "expected a number");
      rate = it->get<double>();
    }

    const bool has_inline = record.contains("features");
    const bool has_file = record.contains("feature_file");
    if (has_inline == has_file) fail(path_, line_, "features", "exactly one of features / feature_file is required");
    FeatureSequence& f = utt.features;
    f.frame_rate_hz = rate;
    if (has_inline) {
      const json& rows = record["features"];
      if (!rows.is_array() || rows.empty()) fail(path_, line_, "features", "expected a non-empty array of frames");
      f.num_frames = static_cast<int>(rows.size());
      for (const json& row : rows) {
        if (!row.is_array() || row.empty()) fail(path_, line_, "features", "each frame must be a non-empty array");
        if (f.dim == 0) f.dim = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != f.dim) fail(path_, line_, "features", "frames have differing widths");
        for (const json& v : row) {
          if (!v.is_number()) fail(path_, line_, "features", "non-numeric value");
          f.values.push_back(v.get<real>());
        }
      }
    } else {
      fs::path file = string_field(record, "feature_file", path_, line_);
      if (file.is_relative()) file = base_ / file;
      Tensor t;
      try {
        t = read_tensor_file(file);
      } catch (const Error& e) {
        fail(path_, line_, "feature_file", e.what());
      }
      if (t.rank() != 2) fail(path_, line_, "feature_file", "expected a [frames, dim] tensor");
      f.num_frames = t.rows();
      f.dim = t.cols();
      f.values.assign(t.values().begin(), t.values().end());
    }
    return utt;
  }
  return std::nullopt;
}

Dataset read_manifest(const fs::path& path) {
  ManifestReader reader(path);
  Dataset data;
  while (auto utt = reader.next()) data.push_back(std::move(*utt));
  return data;
}

void write_manifest(const fs::path& path, const Dataset& data, FeatureStorage storage) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const fs::path feature_dir = path.parent_path() / "features";
  if (storage == FeatureStorage::files) fs::create_directories(feature_dir);
  for (const Utterance& utt : data) {
    json record = {{"id", utt.id}, {"transcript", utt.transcript}, {"dialect", utt.dialect},
                   {"frame_rate_hz", utt.features.frame_rate_hz}};
    if (storage == FeatureStorage::files) {
      const std::string name = utt.id + ".bin";
      write_tensor_file(feature_dir / name, utt.features.as_tensor());
      record["feature_file"] = (fs::path("features") / name).string();
    } else {
      json rows = json::array();
      for (int t = 0; t < utt.features.num_frames; ++t) {
        const auto begin = utt.features.values.begin() + static_cast<std::ptrdiff_t>(t) * utt.features.dim;
        rows.push_back(std::vector<real>(begin, begin + utt.features.dim));
      }
      record["features"] = std::move(rows);
    }
    out << record.dump() << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

}  // namespace speechllm
