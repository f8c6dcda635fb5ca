#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace speechllm::testing {

struct GradientResult {
  std::string op;
  int instance = 0;
  double relative_error = 0;
};

// Every differentiable op and module, on randomly shaped small instances,
// compared against central finite differences. Requires the f64 build.
std::vector<GradientResult> run_gradient_suite(std::uint64_t seed, int instances_per_op);

}  // namespace speechllm::testing
