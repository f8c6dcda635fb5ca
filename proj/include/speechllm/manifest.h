#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "speechllm/corpus.h"

namespace speechllm {

// JSON-lines manifest, one utterance per line:
//   {"id": ..., "transcript": ..., "dialect": ...,
//    "features": [[...], ...] | "feature_file": "relative/or/absolute.bin",
//    "frame_rate_hz": 100}
// "id" defaults to "line-<n>" and "frame_rate_hz" to 100; unknown fields are
// ignored. Malformed records raise ParseError naming the line and field.
class ManifestReader {
 public:
  explicit ManifestReader(const std::filesystem::path& path);
  // Next record, or nullopt at end of file. Blank lines are skipped.
  std::optional<Utterance> next();
  int line_number() const { return line_; }

 private:
  std::filesystem::path path_;
  std::filesystem::path base_;
  std::ifstream in_;
  int line_ = 0;
};

Dataset read_manifest(const std::filesystem::path& path);

enum class FeatureStorage { inline_values, files };

// With FeatureStorage::files, features go to <dir>/features/<id>.bin and the
// manifest references them by relative path.
void write_manifest(const std::filesystem::path& path, const Dataset& data,
                    FeatureStorage storage = FeatureStorage::files);

}  // namespace speechllm
