#pragma once

// Minimal reverse-mode differentiation over dense 64-bit tensors.
//
// A Tensor is a shared handle to a graph node. Operations in ops.hpp record
// their inputs and a backward closure on the output node; backward() walks
// the recorded graph in reverse topological order. Leaf tensors (parameters)
// accumulate gradients across backward() calls until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace protoeeg::diff {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;  // propagates this->grad into parents

  bool is_leaf() const { return parents.empty(); }
  void ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  // Direct write access, for optimizers and projection steps on leaves.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Value copy with no graph history.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// While a guard is alive on the current thread, operations record no graph
// history. Used for inference and for scans over the training set.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_mode_enabled();

// Reverse sweep from a scalar loss. Leaf gradients accumulate; gradients of
// interior nodes are reset at the start of each sweep.
void backward(const Tensor& loss);

}  // namespace protoeeg::diff
