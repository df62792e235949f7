#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "numerics/tensor.hpp"

namespace drift::num {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with per-parameter bias correction. State is keyed by parameter name
// and bound to the node it was created for: when a name is re-bound to a new
// node (e.g. after re-partitioning a layer) its moments restart from zero.
template <typename T>
class Adam {
 public:
  struct Slot {
    std::vector<T> m;
    std::vector<T> v;
    std::uint64_t steps = 0;
    std::weak_ptr<Node<T>> owner;
  };

  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  // Updates every parameter with requires_grad; frozen ones are skipped.
  void step(const std::vector<NamedParam<T>>& params);
  void zero_grad(const std::vector<NamedParam<T>>& params) const;
  // Drops slots whose parameter no longer exists in `params` or was replaced.
  void prune(const std::vector<NamedParam<T>>& params);

  const AdamOptions& options() const { return opts_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  // Restores a slot, binding it to the given parameter node.
  void restore_slot(const std::string& name, const Tensor<T>& param, std::vector<T> m, std::vector<T> v,
                    std::uint64_t steps);

 private:
  AdamOptions opts_;
  std::map<std::string, Slot> slots_;
};

}  // namespace drift::num
