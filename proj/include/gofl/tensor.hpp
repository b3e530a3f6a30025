#pragma once

// Define-by-run reverse-mode automatic differentiation over dense 4-D arrays.
//
// A Tensor is a shared handle to a graph node. Operations that consume a
// tensor requiring gradients record their parents and a backward closure;
// backward() walks the recorded graph in reverse creation order. A graph
// belongs to one thread; detach() produces a graph-free copy that can be
// moved elsewhere.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gofl {

/// Extents in (batch, channels, height, width) order.
struct Shape {
  std::array<std::size_t, 4> dims{};

  constexpr Shape() = default;
  constexpr Shape(std::size_t n, std::size_t c, std::size_t h, std::size_t w)
      : dims{n, c, h, w} {}

  constexpr std::size_t n() const { return dims[0]; }
  constexpr std::size_t c() const { return dims[1]; }
  constexpr std::size_t h() const { return dims[2]; }
  constexpr std::size_t w() const { return dims[3]; }
  constexpr std::size_t numel() const { return dims[0] * dims[1] * dims[2] * dims[3]; }
  constexpr bool is_scalar() const { return numel() == 1; }
  constexpr bool operator==(const Shape&) const = default;

  std::string to_string() const;
};

namespace detail {

std::uint64_t next_node_id();

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  std::uint64_t id = next_node_id();
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using Node = detail::Node<T>;
  using BackwardFn = std::function<void(Node&)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  /// Throws ShapeError unless values.size() == shape.numel().
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);

  /// Creates an operation result. When no input requires gradients the
  /// result is a constant and `backward` is dropped.
  static Tensor make_result(Shape shape, std::vector<T> values,
                            std::vector<Tensor> const& inputs, BackwardFn backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  std::uint64_t node_id() const { return node_->id; }

  std::span<const T> values() const { return node_->value; }
  std::span<T> mutable_values() { return node_->value; }
  T item() const;
  T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    const Shape& s = node_->shape;
    return node_->value[((n * s.c() + c) * s.h() + y) * s.w() + x];
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  /// Empty span when no gradient has been accumulated.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  /// Copy of the values with no graph history.
  Tensor detach(bool requires_grad = false) const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// Accumulates dLoss/dLeaf into every requires-grad leaf reachable from
/// `loss`. Intermediate gradients are reset first, so calling backward twice
/// on one graph doubles leaf gradients exactly as two separate passes would.
/// Throws ShapeError unless loss holds exactly one element.
template <typename T>
void backward(const Tensor<T>& loss);

/// Gradient buffer of `t` if it participates in differentiation, else null.
template <typename T>
std::vector<T>* grad_target(detail::Node<T>& t) {
  return t.requires_grad ? &t.ensure_grad() : nullptr;
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template void backward<float>(const Tensor<float>&);
extern template void backward<double>(const Tensor<double>&);

}  // namespace gofl
