#include "voxelsr/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "voxelsr/error.hpp"

namespace voxelsr {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() noexcept { return grad_mode_enabled; }
void GradMode::set_enabled(bool value) noexcept { grad_mode_enabled = value; }

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  return from_data(shape, std::vector<T>(static_cast<std::size_t>(shape_numel(shape)), value),
                   requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_data(const Shape& shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = shape;
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  if (!node_) throw Error("use of undefined tensor");
  return node_->shape;
}

template <typename T>
std::int64_t BasicTensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + shape_to_string(s));
  return s[axis];
}

template <typename T>
std::int64_t BasicTensor<T>::numel() const {
  return static_cast<std::int64_t>(node_ ? node_->data.size() : 0);
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  if (!node_) throw Error("use of undefined tensor");
  return node_->data;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!node_) throw Error("use of undefined tensor");
  return node_->data;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->data[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool value) {
  if (!node_) throw Error("use of undefined tensor");
  node_->requires_grad = value;
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
  return node_ && !node_->grad.empty();
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!has_grad()) throw Error("tensor has no gradient");
  return node_->grad;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
  if (!node_) throw Error("use of undefined tensor");
  return {node_->ensure_grad(), node_->data.size()};
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone(bool requires_grad) const {
  return from_data(shape(), node_->data, requires_grad);
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (!node_) throw Error("backward() on undefined tensor");
  if (node_->data.size() != 1) {
    throw ShapeError("backward() requires a scalar, got shape " + shape_to_string(node_->shape));
  }
  if (!node_->requires_grad) throw Error("backward() on a tensor that does not require grad");

  // Iterative post-order DFS; parents are visited in their recorded order so
  // the resulting topological order (and thus accumulation order) is fixed.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      auto* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior grads are per-sweep; only leaves accumulate across calls.
  for (auto* n : order) {
    if (n->backward_fn) n->grad.clear();
  }
  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace voxelsr
