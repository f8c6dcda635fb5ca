#include "speechllm/tensor.h"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "speechllm/error.h"

namespace speechllm {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ContractViolation("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<real> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ContractViolation("tensor shape " + shape_string(shape) + " does not match " +
                            std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), real(0), requires_grad);
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  std::vector<real> values(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<real>{value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractViolation("use of undefined tensor");
  return node_->shape;
}

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ContractViolation("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

int Tensor::rows() const {
  if (rank() != 2) throw ContractViolation("rows() needs a matrix, got " + shape_string(shape()));
  return shape()[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw ContractViolation("cols() needs a matrix, got " + shape_string(shape()));
  return shape()[1];
}

std::size_t Tensor::numel() const { return node().value.size(); }

std::span<real> Tensor::values() { return node().value; }
std::span<const real> Tensor::values() const { return node().value; }

real Tensor::item() const {
  if (numel() != 1) throw ContractViolation("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

real Tensor::at(int row, int col) const {
  return node_->value[static_cast<std::size_t>(row) * static_cast<std::size_t>(cols()) +
                      static_cast<std::size_t>(col)];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node().is_leaf) throw ContractViolation("requires_grad can only be set on leaf tensors");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<real> Tensor::grad() { return node().ensure_grad(); }

std::span<const real> Tensor::grad_or_empty() const { return node().grad; }

void Tensor::zero_grad() {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), real(0));
}

Tensor Tensor::clone() const { return Tensor(shape(), node().value, false); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractViolation("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw ContractViolation("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  detail::Node* root = &loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // Interior grads are scratch; drop them so a second backward through a
  // shared subgraph starts clean.
  for (detail::Node* node : order) {
    if (!node->is_leaf) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

namespace detail {

Tensor make_result(Shape shape, std::vector<real> values, std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->is_leaf = false;
  if (grad_enabled()) {
    bool any = std::any_of(parents.begin(), parents.end(),
                           [](const std::shared_ptr<Node>& p) { return p->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace speechllm
