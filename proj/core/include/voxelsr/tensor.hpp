#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace voxelsr {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

// One value in the dynamic tape. Leaves have no parents; interior nodes carry
// a closure that reads `grad` and accumulates into the parents' grads.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  T* ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad.data();
  }
};

}  // namespace detail

/// Dense row-major tensor handle with reverse-mode autodiff.
///
/// Copies share the underlying storage and graph node, so a parameter tensor
/// held by a model and by an optimizer refers to the same values. Use clone()
/// for an independent leaf copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor() = default;
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

  static BasicTensor zeros(const Shape& shape, bool requires_grad = false);
  static BasicTensor full(const Shape& shape, T value, bool requires_grad = false);
  static BasicTensor from_data(const Shape& shape, std::vector<T> data, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t numel() const;

  std::span<const T> data() const;
  // Direct write access. Intended for leaves (parameter init, optimizer updates).
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  /// Leaf copy of the current values, detached from any graph.
  BasicTensor clone(bool requires_grad = false) const;
  BasicTensor detach() const { return clone(false); }

  /// Reverse-mode sweep from this scalar. Leaf grads accumulate across calls.
  void backward() const;

  const NodePtr& node() const noexcept { return node_; }

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t, bool requires_grad = false) {
  std::vector<To> out(t.data().begin(), t.data().end());
  return BasicTensor<To>::from_data(t.shape(), std::move(out), requires_grad);
}

/// Gradient recording switch. Thread-local; graphs are single-threaded.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool value) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace voxelsr
