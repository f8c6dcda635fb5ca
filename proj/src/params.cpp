#include "speechllm/params.h"

#include <algorithm>

#include "speechllm/error.h"

namespace speechllm {

std::string_view group_name(Group group) {
  switch (group) {
    case Group::encoder: return "encoder";
    case Group::projector: return "projector";
    case Group::llm_bridge: return "llm_bridge";
    case Group::llm_body: return "llm_body";
    case Group::lora: return "lora";
    case Group::ctc_head: return "ctc_head";
  }
  return "?";
}

Group parse_group(std::string_view name) {
  for (Group g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  throw ConfigError("unknown parameter group '" + std::string(name) + "'");
}

Tensor ParameterStore::add(std::string name, Group group, Tensor init, bool decay) {
  if (contains(name)) throw ContractViolation("duplicate parameter name " + name);
  init.set_requires_grad(trainable(group));
  params_.push_back(Parameter{std::move(name), group, init, decay});
  return init;
}

void ParameterStore::remove(const std::string& name) {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
  if (it == params_.end()) throw ContractViolation("no parameter named " + name);
  params_.erase(it);
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

const Parameter& ParameterStore::get(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractViolation("no parameter named " + name);
}

std::vector<const Parameter*> ParameterStore::in_group(Group group) const {
  std::vector<const Parameter*> out;
  for (const Parameter& p : params_) {
    if (p.group == group) out.push_back(&p);
  }
  return out;
}

void ParameterStore::set_trainable(Group group, bool flag) {
  trainable_[group] = flag;
  for (Parameter& p : params_) {
    if (p.group == group) p.tensor.set_requires_grad(flag);
  }
}

void ParameterStore::set_trainable(std::string_view group, bool flag) { set_trainable(parse_group(group), flag); }

void ParameterStore::freeze_all() {
  for (Group g : kAllGroups) set_trainable(g, false);
}

bool ParameterStore::trainable(Group group) const {
  auto it = trainable_.find(group);
  return it != trainable_.end() && it->second;
}

std::size_t ParameterStore::parameter_count(Group group) const {
  std::size_t n = 0;
  for (const Parameter& p : params_) {
    if (p.group == group) n += p.tensor.numel();
  }
  return n;
}

std::size_t ParameterStore::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) {
    if (trainable(p.group)) n += p.tensor.numel();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

StateDict ParameterStore::state() const {
  StateDict out;
  for (const Parameter& p : params_) out.emplace(p.name, p.tensor.clone());
  return out;
}

void ParameterStore::load_state(const StateDict& state) {
  for (Parameter& p : params_) {
    auto it = state.find(p.name);
    if (it == state.end()) throw ContractViolation("state is missing parameter " + p.name);
    if (it->second.shape() != p.tensor.shape()) {
      throw ContractViolation("shape mismatch for " + p.name + ": " + shape_string(it->second.shape()) +
                              " vs " + shape_string(p.tensor.shape()));
    }
    auto src = it->second.values();
    std::copy(src.begin(), src.end(), p.tensor.values().begin());
  }
}

}  // namespace speechllm
