#include "numerics/adam.hpp"

#include <cmath>
#include <algorithm>

namespace drift::num {

template <typename T>
void Adam<T>::step(const std::vector<NamedParam<T>>& params) {
  const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
  const T eps = static_cast<T>(opts_.eps);
  for (const auto& p : params) {
    if (!p.tensor.requires_grad()) continue;
    Node<T>* node = p.tensor.node();
    Slot& slot = slots_[p.name];
    if (slot.owner.lock().get() != node || slot.m.size() != node->value.size()) {
      slot = Slot{std::vector<T>(node->value.size(), T{0}), std::vector<T>(node->value.size(), T{0}), 0,
                  p.tensor.handle()};
    }
    if (node->grad.size() != node->value.size()) continue;  // never reached by backward
    ++slot.steps;
    const T c1 = static_cast<T>(1.0 - std::pow(opts_.beta1, static_cast<double>(slot.steps)));
    const T c2 = static_cast<T>(1.0 - std::pow(opts_.beta2, static_cast<double>(slot.steps)));
    const T lr = static_cast<T>(opts_.lr);
    auto& w = node->value.data;
    const auto& g = node->grad;
    for (std::size_t i = 0; i < w.size(); ++i) {
      slot.m[i] = b1 * slot.m[i] + (T{1} - b1) * g[i];
      slot.v[i] = b2 * slot.v[i] + (T{1} - b2) * g[i] * g[i];
      const T mhat = slot.m[i] / c1;
      const T vhat = slot.v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad(const std::vector<NamedParam<T>>& params) const {
  for (const auto& p : params) {
    auto& g = p.tensor.node()->grad;
    std::fill(g.begin(), g.end(), T{0});
  }
}

template <typename T>
void Adam<T>::prune(const std::vector<NamedParam<T>>& params) {
  std::map<std::string, const Node<T>*> live;
  for (const auto& p : params) {
    if (p.tensor.requires_grad()) live[p.name] = p.tensor.node();
  }
  for (auto it = slots_.begin(); it != slots_.end();) {
    const auto found = live.find(it->first);
    const bool stale = found == live.end() || it->second.owner.lock().get() != found->second;
    it = stale ? slots_.erase(it) : std::next(it);
  }
}

template <typename T>
void Adam<T>::restore_slot(const std::string& name, const Tensor<T>& param, std::vector<T> m, std::vector<T> v,
                           std::uint64_t steps) {
  if (m.size() != param.numel() || v.size() != param.numel()) {
    throw DimensionError("adam: restored moments for '" + name + "' do not match parameter size");
  }
  slots_[name] = Slot{std::move(m), std::move(v), steps, param.handle()};
}

template class Adam<float>;
template class Adam<double>;

}  // namespace drift::num
