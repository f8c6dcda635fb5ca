#pragma once

#include <functional>
#include <span>
#include <vector>

#include "speechllm/tensor.h"

namespace speechllm {

// Central-difference estimate of df/dp for every coordinate of every tensor
// in params. f is re-evaluated with one coordinate perturbed at a time; the
// tensors are restored afterwards. Test oracle only: it never calls backward.
std::vector<std::vector<double>> finite_difference_grad(const std::function<double()>& f,
                                                        std::span<Tensor> params, double eps);

// ||a - b|| / max(||a||, ||b||), with a tiny floor so that two zero vectors
// compare equal.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace speechllm
