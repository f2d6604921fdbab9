#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "prenet/error.hpp"

namespace prenet {

// NCHW extent of a tensor. Scalars are (1, 1, 1, 1).
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  constexpr std::int64_t numel() const { return n * c * h * w; }
  constexpr std::int64_t plane() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const;
};

inline constexpr Shape kScalarShape{1, 1, 1, 1};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  // Empty until a backward pass routes gradient into this node.
  std::vector<T> grad;
  bool requires_grad = false;
  // Creation order. Inputs of an operation always carry a smaller value than
  // its output, which is what the tape sorts on.
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(const Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

std::uint64_t next_sequence();

}  // namespace detail

/// Dense 4-D array with an optional gradient slot.
///
/// A Tensor is a cheap handle; copies share the underlying node. Values are
/// immutable once an operation has produced them. Leaves (parameters and
/// inputs) may be overwritten in place through mutable_data(), which is how
/// the optimizer updates weights between passes.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->shape.numel(); }

  std::span<const T> data() const { return node_->data; }
  // Leaves only; raises ContractError on an operation output.
  std::span<T> mutable_data();

  T item() const;
  T at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf(); }
  void set_requires_grad(bool value);

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  // Zeros of the right size when no gradient has been accumulated yet.
  std::vector<T> grad() const;
  std::span<const T> grad_view() const { return node_->grad; }
  void zero_grad();

  // A new leaf holding a copy of the values, cut from any graph.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  bool all_finite() const;

  template <typename U>
  Tensor<U> cast(bool requires_grad = false) const {
    std::vector<U> out(node_->data.begin(), node_->data.end());
    return Tensor<U>::from_vector(shape(), std::move(out), requires_grad);
  }

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node<T>> node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node<T>> node_;
};

/// Builds the output of an operation. The backward closure and the input
/// references are kept only when at least one input requires a gradient, so
/// inference never retains a graph.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                      std::function<void(const detail::Node<T>&)> backward);

enum class BackwardStatus {
  kOk,
  // The output does not depend on any tensor that requires a gradient.
  kDetached,
};

/// Reverse-ordered record of the operations reachable from one output.
///
/// Nodes are collected by depth-first search and ordered by creation
/// sequence, newest first, so every operation runs after all of its
/// consumers and exactly once.
template <typename T>
class Tape {
 public:
  explicit Tape(const Tensor<T>& root);

  const std::vector<detail::Node<T>*>& order() const { return order_; }
  std::size_t size() const { return order_.size(); }

  // Seeds d(root)/d(root) = 1 and propagates. Leaf gradients accumulate;
  // gradients on interior nodes are released once consumed.
  void run();

 private:
  std::shared_ptr<detail::Node<T>> root_;
  std::vector<detail::Node<T>*> order_;
};

/// Populates grad on every requires_grad leaf reachable from `output`.
///
/// `output` must hold exactly one element. Leaf gradients accumulate across
/// calls, so callers zero them between optimizer steps. Each forward pass
/// builds a fresh graph; calling backward twice on the same graph adds the
/// gradient twice.
template <typename T>
BackwardStatus backward(const Tensor<T>& output);

}  // namespace prenet
