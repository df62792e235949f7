#include "numerics/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "numerics/flops.hpp"

namespace drift::num {

namespace {
thread_local bool t_grad_enabled = true;
thread_local FlopCounts t_flops;
thread_local FlopCategory t_category = FlopCategory::kData;
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = saved_; }

void FlopCounter::reset() { t_flops = {}; }
FlopCounts FlopCounter::read() { return t_flops; }
void FlopCounter::add(std::uint64_t flops) {
  (t_category == FlopCategory::kData ? t_flops.data : t_flops.weight) += flops;
}
FlopCategory FlopCounter::category() { return t_category; }
void FlopCounter::set_category(FlopCategory c) { t_category = c; }

template <typename T>
Tensor<T> Tensor<T>::constant(Array<T> value) {
  auto n = std::make_shared<NodeT>();
  n->value = std::move(value);
  return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Array<T> value, bool requires_grad) {
  auto n = std::make_shared<NodeT>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Array<T> value, std::vector<Tensor> parents, BackwardFn backward) {
  auto n = std::make_shared<NodeT>();
  n->value = std::move(value);
  if (t_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.defined() && p.requires_grad(); });
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node_);
      n->backward_fn = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on non-scalar tensor of shape " + shape_str(shape()));
  return node_->value.data[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (node_->grad.size() == node_->value.size()) return node_->grad;
  return std::vector<T>(node_->value.size(), T{0});
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar root, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  Node<T>* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS over nodes that participate in differentiation.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
  // Interior grads are transient; only leaves keep theirs.
  for (Node<T>* n : order) {
    if (n->backward_fn) std::vector<T>().swap(n->grad);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace drift::num
