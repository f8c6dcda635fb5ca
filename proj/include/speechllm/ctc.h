#pragma once

#include <span>
#include <vector>

#include "speechllm/tensor.h"

namespace speechllm {

// Fewest frames that can emit target: one per label plus a blank between
// each pair of equal neighbours.
int ctc_min_frames(std::span<const int> target);

// Negative log probability of all frame paths over logits[T, V+1] (blank =
// column V) that collapse to target, by the log-space forward recursion.
// The backward pass uses the matching beta recursion. Throws
// InfeasibleAlignmentError when T < ctc_min_frames(target).
Tensor ctc_loss(const Tensor& logits, std::span<const int> target);

// Per-frame argmax, merge repeats, drop blanks.
std::vector<int> ctc_greedy_decode(const Tensor& logits);

}  // namespace speechllm
