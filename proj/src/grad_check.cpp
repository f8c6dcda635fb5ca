#include "speechllm/grad_check.h"

#include <algorithm>
#include <cmath>

#include "speechllm/error.h"

namespace speechllm {

std::vector<std::vector<double>> finite_difference_grad(const std::function<double()>& f,
                                                        std::span<Tensor> params, double eps) {
  if (!(eps > 0)) throw ContractViolation("finite_difference_grad: eps must be positive");
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (Tensor& p : params) {
    auto values = p.values();
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const real original = values[i];
      values[i] = static_cast<real>(original + eps);
      const double up = f();
      values[i] = static_cast<real>(original - eps);
      const double down = f();
      values[i] = original;
      g[i] = (up - down) / (2 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractViolation("relative_error: length mismatch");
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
  return std::sqrt(diff) / denom;
}

}  // namespace speechllm
