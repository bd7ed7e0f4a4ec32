#include "proda/numerics/tensor.hpp"

#include <cmath>
#include <unordered_set>
#include <utility>

#include "proda/errors.hpp"

namespace proda::num {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

void expect_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw ContractError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                        to_string(b));
  }
}

namespace detail {

std::span<double> Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values,
                                        bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ContractError("tensor: shape " + to_string(shape) + " holds " +
                        std::to_string(numel(shape)) + " values, got " +
                        std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("leaf", "leaf: non-finite value");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ContractError("tensor: axis " + std::to_string(axis) + " out of range for " +
                        to_string(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::size() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() {
  if (!node_->parents.empty() || node_->backward) {
    throw ContractError(std::string("tensor: mutable_data on op result '") + node_->op + "'");
  }
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("tensor: item() on shape " + to_string(shape()));
  return node_->value[0];
}

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.clear(); }

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("tensor: requires_grad can only be set on leaves");
  node_->requires_grad = flag;
}

const char* Tensor::op_name() const { return node_->op; }

bool Tensor::is_leaf() const { return node_->parents.empty() && !node_->backward; }

Tensor make_op(const char* name, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents, std::function<void(detail::Node&)> backward) {
  if (numel(shape) != value.size()) {
    throw ContractError(std::string(name) + ": produced " + std::to_string(value.size()) +
                        " values for shape " + to_string(shape));
  }
  for (double v : value) {
    if (!std::isfinite(v)) {
      throw NumericError(name, std::string(name) + ": non-finite forward value");
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = name;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& root) {
  if (root.size() != 1) {
    throw ContractError("backward: root must be scalar, got " + to_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order without recursion limits.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  auto* start = root.node().get();
  stack.emplace_back(start, 0);
  seen.insert(start);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  start->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward) continue;
    if (node->grad.empty()) continue;  // unreachable contribution
    node->backward(*node);
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

}  // namespace proda::num
