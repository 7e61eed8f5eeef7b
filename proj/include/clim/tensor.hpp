#pragma once

// Dense row-major tensors with eager reverse-mode autodiff.
//
// A Tensor<T> is a cheap handle onto an immutable payload; only the gradient
// buffer is mutated after construction. Differentiable ops record a Node on a
// per-thread tape (record-on-execute), and backward() replays the recorded
// order in reverse, then frees the graph. Distinct graphs live on distinct
// threads; read-only tensors can be shared freely.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace clim {

using Shape = std::vector<int>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline void validate_shape(const Shape& s) {
  if (s.empty()) throw ShapeError("rank-0 shapes are not supported; scalars use shape (1)");
  for (int d : s)
    if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
}

namespace detail {

struct TapeFlags {
  bool grad_enabled = true;
  bool finite_checks = true;
  std::uint64_t next_seq = 1;
};

inline TapeFlags& tape_flags() {
  thread_local TapeFlags f;
  return f;
}

}  // namespace detail

// Disables graph recording in scope (inference / data preparation).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::tape_flags().grad_enabled) { detail::tape_flags().grad_enabled = false; }
  ~NoGradGuard() { detail::tape_flags().grad_enabled = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor requires a floating-point element type");

 public:
  struct Impl;

  struct Node {
    std::uint64_t seq = 0;
    Impl* owner = nullptr;  // impl that owns this node via shared_ptr
    std::vector<Tensor> inputs;
    std::function<void(Node&, const std::vector<T>&)> backprop;  // arg: owner's output grad
  };

  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
    std::shared_ptr<Node> node;  // null for leaves
  };

  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<T> data) {
    validate_shape(shape);
    if (shape_numel(shape) != data.size())
      throw ShapeError("data size " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    return t;
  }

  static Tensor full(Shape shape, T value) {
    validate_shape(shape);
    std::vector<T> d(shape_numel(shape), value);
    return from_data(std::move(shape), std::move(d));
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }
  static Tensor scalar(T value) { return from_data({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int extent(int axis) const {
    if (axis < 0 || axis >= ndim())
      throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(impl_->shape));
    return impl_->shape[static_cast<std::size_t>(axis)];
  }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return {impl_->data.data(), impl_->data.size()}; }
  const T* raw() const { return impl_->data.data(); }
  // Internal: ops fill freshly built tensors through this before publishing them.
  T* raw_mut() { return impl_->data.data(); }

  T item() const {
    if (numel() != 1) throw ShapeError("item() called on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }

  T at(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != ndim()) throw ShapeError("at(): index rank mismatch");
    std::size_t off = 0;
    int axis = 0;
    for (int i : idx) {
      const int e = impl_->shape[static_cast<std::size_t>(axis)];
      if (i < 0 || i >= e) throw ShapeError("at(): index out of range");
      off = off * static_cast<std::size_t>(e) + static_cast<std::size_t>(i);
      ++axis;
    }
    return impl_->data[off];
  }

  bool requires_grad() const { return impl_->requires_grad; }

  Tensor& set_requires_grad(bool value) {
    if (impl_->node) throw AutogradError("requires_grad can only be toggled on leaf tensors");
    impl_->requires_grad = value;
    return *this;
  }

  bool is_leaf() const { return impl_->node == nullptr; }
  bool has_grad() const { return !impl_->grad.empty(); }

  std::span<const T> grad() const {
    if (impl_->grad.empty()) throw AutogradError("tensor has no gradient");
    return {impl_->grad.data(), impl_->grad.size()};
  }

  void zero_grad() { impl_->grad.clear(); }

  // Same payload handle (not element equality).
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  Impl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<Impl> impl_;

  template <typename U>
  friend Tensor<U> make_result(const char*, Shape, std::vector<U>, std::vector<Tensor<U>>,
                               std::function<void(typename Tensor<U>::Node&, const std::vector<U>&)>);
  template <typename U>
  friend void backward(const Tensor<U>&);
};

namespace detail {

template <typename T>
void check_finite(const char* opname, const std::vector<T>& data) {
  if (!tape_flags().finite_checks) return;
  for (const T v : data) {
    if (!std::isfinite(v))
      throw NumericError(std::string(opname) + " produced a non-finite value");
  }
}

// Returns an accumulation buffer for the tensor's gradient, or null when the
// tensor does not participate in differentiation.
template <typename T>
std::vector<T>* grad_sink(Tensor<T>& t) {
  auto* impl = t.impl();
  if (!impl->requires_grad) return nullptr;
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), T(0));
  return &impl->grad;
}

}  // namespace detail

inline bool& finite_checks_enabled() { return detail::tape_flags().finite_checks; }

// Builds an op result and records it on the tape when any input requires grad.
template <typename T>
Tensor<T> make_result(const char* opname, Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(typename Tensor<T>::Node&, const std::vector<T>&)> backprop) {
  detail::check_finite(opname, data);
  Tensor<T> out = Tensor<T>::from_data(std::move(shape), std::move(data));
  bool need_grad = detail::tape_flags().grad_enabled;
  if (need_grad) {
    need_grad = false;
    for (const auto& in : inputs)
      if (in.requires_grad()) {
        need_grad = true;
        break;
      }
  }
  if (need_grad) {
    auto node = std::make_shared<typename Tensor<T>::Node>();
    node->seq = detail::tape_flags().next_seq++;
    node->owner = out.impl_.get();
    node->inputs = std::move(inputs);
    node->backprop = std::move(backprop);
    out.impl_->requires_grad = true;
    out.impl_->node = std::move(node);
  }
  return out;
}

// Reverse-mode sweep from a scalar root. Visits each recorded node exactly
// once in reverse execution order, accumulates leaf gradients, then frees the
// graph; a second call on the same root raises AutogradError.
template <typename T>
void backward(const Tensor<T>& root) {
  if (root.numel() != 1) throw ShapeError("backward() requires a scalar root, got " + shape_str(root.shape()));
  using Node = typename Tensor<T>::Node;
  auto root_node = root.impl_->node;
  if (!root_node) throw AutogradError("backward() on a detached graph (no recorded operations, or backward already ran)");

  std::vector<std::shared_ptr<Node>> nodes;
  std::unordered_set<Node*> seen;
  std::vector<std::shared_ptr<Node>> stack{root_node};
  seen.insert(root_node.get());
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (auto& in : n->inputs) {
      auto child = in.impl()->node;
      if (child && seen.insert(child.get()).second) stack.push_back(child);
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });

  root.impl_->grad.assign(1, T(1));
  for (auto& n : nodes) {
    if (n->owner->grad.empty()) continue;  // no gradient flowed to this output
    n->backprop(*n, n->owner->grad);
  }
  for (auto& n : nodes) n->owner->node.reset();
}

}  // namespace clim
