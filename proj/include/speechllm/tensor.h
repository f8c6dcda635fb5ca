#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "speechllm/real.h"

namespace speechllm {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // empty until first written
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::vector<real>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), real(0));
    return grad;
  }
};

}  // namespace detail

// Dense row-major tensor with a shared handle. Copies alias the same storage;
// use clone() for an independent value.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<real> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int axis) const;
  int rows() const;
  int cols() const;
  std::size_t numel() const;

  std::span<real> values();
  std::span<const real> values() const;
  real item() const;
  real at(int row, int col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  // Zero-filled on first access.
  std::span<real> grad();
  std::span<const real> grad_or_empty() const;
  void zero_grad();

  // Same values, no history, fresh storage.
  Tensor clone() const;
  // Shares nothing with the graph; values copied.
  Tensor detach() const { return clone(); }

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Graph recording switch; thread-local so evaluation threads can run without
// building graphs.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Reverse-mode sweep from a one-element loss. Leaf gradients accumulate, so
// several backward calls before an optimizer step sum their contributions.
void backward(const Tensor& loss);

namespace detail {

// Builds an op result. History is recorded only when grad mode is on and at
// least one parent requires grad.
Tensor make_result(Shape shape, std::vector<real> values,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward_fn);

}  // namespace detail

}  // namespace speechllm
