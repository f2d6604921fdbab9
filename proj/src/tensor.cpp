#include "prenet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace prenet {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

namespace detail {

std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace detail

namespace {

template <typename T>
std::shared_ptr<detail::Node<T>> new_leaf(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative extent in shape " + shape.str());
  }
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape.str());
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = detail::next_sequence();
  return node;
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  if (shape.numel() < 0) throw ShapeError("negative extent in shape " + shape.str());
  return Tensor(new_leaf<T>(shape, std::vector<T>(static_cast<std::size_t>(shape.numel()), value),
                            requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(Shape shape, std::vector<T> values, bool requires_grad) {
  return Tensor(new_leaf<T>(shape, std::move(values), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full(kScalarShape, value, requires_grad);
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node_->is_leaf()) throw ContractError("mutable_data on a non-leaf tensor");
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape().str());
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
  const Shape& s = shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c || y < 0 || y >= s.h || x < 0 || x >= s.w) {
    throw ContractError("index out of range for shape " + s.str());
  }
  return node_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + y) * s.w + x)];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  if (!node_->is_leaf()) throw ContractError("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = value;
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (node_->grad.empty()) return std::vector<T>(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return clone(false);
}

template <typename T>
Tensor<T> Tensor<T>::clone(bool requires_grad) const {
  return Tensor(new_leaf<T>(shape(), node_->data, requires_grad));
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(node_->data.begin(), node_->data.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                      std::function<void(const detail::Node<T>&)> backward) {
  auto node = new_leaf<T>(shape, std::move(values), false);
  const bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [](const Tensor<T>& t) { return t.requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>::wrap(std::move(node));
}

template <typename T>
Tape<T>::Tape(const Tensor<T>& root) : root_(root.node()) {
  if (!root_ || !root_->requires_grad) return;
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{root_.get()};
  seen.insert(root_.get());
  while (!stack.empty()) {
    detail::Node<T>* node = stack.back();
    stack.pop_back();
    order_.push_back(node);
    for (const auto& in : node->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order_.begin(), order_.end(),
            [](const detail::Node<T>* a, const detail::Node<T>* b) { return a->seq > b->seq; });
}

template <typename T>
void Tape<T>::run() {
  if (order_.empty()) return;
  for (detail::Node<T>* node : order_) {
    if (!node->is_leaf()) node->grad.clear();
  }
  root_->grad_buffer()[0] += T(1);
  for (detail::Node<T>* node : order_) {
    if (node->is_leaf()) continue;
    if (!node->grad.empty()) node->backward(*node);
    std::vector<T>().swap(node->grad);
  }
}

template <typename T>
BackwardStatus backward(const Tensor<T>& output) {
  if (!output.defined() || output.numel() != 1) {
    throw ContractError("backward requires a single-element output, got shape " +
                        (output.defined() ? output.shape().str() : std::string("<undefined>")));
  }
  if (!output.requires_grad()) return BackwardStatus::kDetached;
  Tape<T> tape(output);
  tape.run();
  return BackwardStatus::kOk;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   std::function<void(const detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    std::function<void(const detail::Node<double>&)>);
template BackwardStatus backward(const Tensor<float>&);
template BackwardStatus backward(const Tensor<double>&);

}  // namespace prenet
