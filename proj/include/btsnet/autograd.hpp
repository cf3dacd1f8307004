#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "btsnet/tensor.hpp"

namespace btsnet {

// Reverse-mode recording for the handful of ops the network needs. Each op
// produces a Node holding its value and, when recording, a closure that
// pushes the node's gradient into its inputs.

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Tensor<T>& g);
  /// Zero-filled gradient buffer matching `value`, allocated if needed.
  Tensor<T>& grad_buffer();
};

/// Shared handle to a Node. Copies alias the same value and gradient.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient; a zero tensor when nothing has been accumulated yet.
  Tensor<T> grad() const;
  void zero_grad();

  /// Back-propagates from this node, seeded with ones. Gradients accumulate
  /// into every reachable node that requires them.
  void backward() const;

  /// Same value, cut from the recorded graph.
  Var detach() const;

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;

  template <typename U>
  friend Var<U> make_result(Tensor<U> value, std::vector<Var<U>> inputs,
                            std::function<void(Node<U>&)> backward_fn);
};

/// Wraps an op result. Records `backward_fn` only when gradient recording is
/// enabled and at least one input requires a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn);

bool grad_enabled();

/// Disables graph recording for its lifetime (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace btsnet
