#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "speechllm/tensor.h"

namespace speechllm {

// Freeze/unfreeze units. Every model parameter belongs to exactly one group.
enum class Group { encoder, projector, llm_bridge, llm_body, lora, ctc_head };

inline constexpr std::array<Group, 6> kAllGroups = {Group::encoder,  Group::projector, Group::llm_bridge,
                                                     Group::llm_body, Group::lora,      Group::ctc_head};

std::string_view group_name(Group group);
// Throws ConfigError for an unknown name.
Group parse_group(std::string_view name);

struct Parameter {
  std::string name;
  Group group;
  Tensor tensor;
  bool decay;  // weight decay applies (weight matrices only)
};

// Name -> value snapshot, detached from any graph.
using StateDict = std::map<std::string, Tensor>;

class ParameterStore {
 public:
  // Registers a parameter; its trainability follows the group's current flag.
  Tensor add(std::string name, Group group, Tensor init, bool decay);
  void remove(const std::string& name);

  bool contains(const std::string& name) const;
  const Parameter& get(const std::string& name) const;
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<const Parameter*> in_group(Group group) const;

  void set_trainable(Group group, bool flag);
  void set_trainable(std::string_view group, bool flag);
  void freeze_all();
  bool trainable(Group group) const;

  std::size_t parameter_count(Group group) const;
  std::size_t trainable_parameter_count() const;

  void zero_grad();

  StateDict state() const;
  // Copies values by name. Throws ContractViolation on a missing name or a
  // shape mismatch; extra entries in the dict are ignored.
  void load_state(const StateDict& state);

 private:
  std::vector<Parameter> params_;
  std::map<Group, bool> trainable_;
};

}  // namespace speechllm
