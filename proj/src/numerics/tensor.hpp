#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "numerics/array.hpp"

namespace drift::num {

template <typename T>
struct Node {
  Array<T> value;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T{0});
    return grad;
  }
};

// Shared handle to a node of the recorded graph. Leaves created with
// parameter() play the role of trainable (or frozen) parameters.
template <typename T>
class Tensor {
 public:
  using NodeT = Node<T>;
  using BackwardFn = std::function<void(NodeT&)>;

  Tensor() = default;

  static Tensor constant(Array<T> value);
  static Tensor parameter(Array<T> value, bool requires_grad = true);
  // Records an op result. Parents/backward are dropped when no parent needs grad
  // or grad recording is disabled.
  static Tensor from_op(Array<T> value, std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t dim(std::size_t i) const { return node_->value.shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  const Array<T>& value() const { return node_->value; }
  std::span<const T> data() const { return node_->value.data; }
  // Direct mutation of a leaf's storage (optimizer updates, re-factorization).
  std::span<T> mutable_data() { return node_->value.data; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  // Zero-filled when nothing has been accumulated.
  std::vector<T> grad() const;
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  NodeT* node() const { return node_.get(); }
  const std::shared_ptr<NodeT>& handle() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<NodeT> n) : node_(std::move(n)) {}
  std::shared_ptr<NodeT> node_;
};

// Reverse-mode sweep from a scalar root. Accumulates into every reachable
// leaf with requires_grad; frozen leaves are never touched.
template <typename T>
void backward(const Tensor<T>& loss);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

}  // namespace drift::num
