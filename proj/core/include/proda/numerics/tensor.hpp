#pragma once

// Dense float64 tensors with tape-free reverse-mode differentiation.
//
// Every op result owns a node holding its value, a lazily allocated gradient
// buffer, strong references to its inputs and a backward closure. Nodes whose
// inputs do not require gradients drop both, so inference graphs cost no more
// than the values themselves.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace proda::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-filled on first use.
  std::span<double> grad_buffer();
  bool parent_wants_grad(std::size_t i) const { return parents[i]->requires_grad; }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  /// Writable view of a leaf's values (parameters, fixtures). Throws on op results.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  const char* op_name() const;
  bool is_leaf() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_op(const char*, Shape, std::vector<double>, std::vector<Tensor>,
                        std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

/// Builds an op result. Validates the value is finite (throws NumericError
/// naming `name` otherwise) and records the backward closure only when at least
/// one parent requires a gradient.
Tensor make_op(const char* name, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents, std::function<void(detail::Node&)> backward);

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires a
/// gradient. Root must hold a single element.
void backward(const Tensor& root);

/// Throws ContractError naming both shapes when they differ.
void expect_same_shape(const char* op, const Shape& a, const Shape& b);

}  // namespace proda::num
