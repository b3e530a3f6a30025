#include "gofl/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "gofl/errors.hpp"

namespace gofl {

std::string Shape::to_string() const {
  return "[" + std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" +
         std::to_string(dims[2]) + "x" + std::to_string(dims[3]) + "]";
}

namespace detail {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  return from(shape, std::vector<T>(shape.numel(), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor of shape " + shape.to_string() + " needs " +
                     std::to_string(shape.numel()) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values,
                                 std::vector<Tensor> const& inputs, BackwardFn backward) {
  Tensor out = from(shape, std::move(values), false);
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) out.node_->parents.push_back(t.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().to_string());
  return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach(bool requires_grad) const {
  return from(node_->shape, node_->value, requires_grad);
}

template <typename T>
void backward(const Tensor<T>& loss) {
  using Node = detail::Node<T>;
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss.defined() ? loss.shape().to_string() : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node()};
  seen.insert(loss.node());
  while (!stack.empty()) {
    Node* node = stack.back();
    stack.pop_back();
    order.push_back(node);
    for (const auto& parent : node->parents) {
      if (parent->requires_grad && seen.insert(parent.get()).second) {
        stack.push_back(parent.get());
      }
    }
  }
  // Node ids grow with creation time, so descending id is a reverse
  // topological order of the graph.
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

  for (Node* node : order) {
    if (!node->parents.empty()) node->grad.assign(node->value.size(), T(0));
  }
  loss.node()->ensure_grad()[0] += T(1);
  for (Node* node : order) {
    if (node->backward) node->backward(*node);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace gofl
