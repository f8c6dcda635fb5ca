#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "speechllm/params.h"

namespace speechllm {

// Tensor file: little-endian u32 rank, u32 dims[rank], then the values in
// the build's scalar width. Readers accept either float width.
void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor_file(const std::filesystem::path& path);

struct CheckpointMeta {
  long step = 0;
  std::string config_hash;
  std::map<std::string, std::string> extra;  // free-form key/value lines
};

struct Checkpoint {
  StateDict tensors;
  std::map<std::string, Group> groups;
  CheckpointMeta meta;
};

// Directory with one <name>.bin per parameter plus meta.txt (format, dtype,
// step, config hash, extra keys, and one "param <name> <group>" line each).
void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& store, const CheckpointMeta& meta);
Checkpoint read_checkpoint(const std::filesystem::path& dir);
// Reads a checkpoint and loads its values into matching parameters.
CheckpointMeta load_checkpoint(const std::filesystem::path& dir, ParameterStore& store);

// 64-bit FNV-1a, hex encoded. Used to tie checkpoints to their config text.
std::string fnv1a_hex(std::string_view text);

}  // namespace speechllm
