#pragma once

#include <string_view>

namespace speechllm {

// The whole library is built once per scalar width. Training and the CLI use
// float; gradient checks link the double build.
#ifdef SPEECHLLM_USE_DOUBLE
using real = double;
inline constexpr std::string_view kRealName = "f64";
#else
using real = float;
inline constexpr std::string_view kRealName = "f32";
#endif

}  // namespace speechllm
