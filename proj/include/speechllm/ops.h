#pragma once

#include <span>
#include <vector>

#include "speechllm/tensor.h"

namespace speechllm {

// Differentiable operations. Matrices are rank-2 [rows, cols]; vectors are
// rank-1. Every op here has a finite-difference test in the gradient suite.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real factor);
// x[m,n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x + c where c is a constant of the same size (e.g. an additive attention mask).
Tensor add_constant(const Tensor& x, std::span<const real> c);

Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sin(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps = real(1e-5));
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// Rows of table[V,d] selected by ids.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Mean negative log-likelihood of targets over rows where mask is set.
// Throws UndefinedLossError when no row is selected.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     const std::vector<bool>& mask);

Tensor slice_rows(const Tensor& x, int begin, int end);
Tensor slice_cols(const Tensor& x, int begin, int end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor reshape(const Tensor& x, Shape shape);

// im2col over time: x[T,C] -> [L, kernel*C] where row l holds frames
// l*stride - pad ... l*stride - pad + kernel - 1 (zeros outside [0,T)).
// L = floor((T + 2*pad - kernel)/stride) + 1, optionally truncated to max_rows.
Tensor unfold_frames(const Tensor& x, int kernel, int stride, int pad, int max_rows = -1);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace speechllm
