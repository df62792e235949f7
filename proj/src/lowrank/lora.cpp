#include "lowrank/lora.hpp"

#include <algorithm>
#include <cmath>

#include "numerics/ops.hpp"

namespace drift::lowrank {

template <typename T>
LoraConv<T> make_lora(const Array<T>& w_conv, const ConvGeometry& geom, std::size_t rank, T alpha, num::Rng& rng) {
  if (w_conv.shape != num::Shape{geom.c_out, geom.c_in, geom.k}) {
    throw DimensionError("make_lora: base weight " + num::shape_str(w_conv.shape) + " does not match geometry");
  }
  LoraConv<T> l;
  l.geom = geom;
  l.alpha = alpha;
  l.rank = std::clamp<std::size_t>(rank, 1, geom.max_rank());
  Array<T> down({l.rank, geom.c_in, geom.k});
  const double sd = 1.0 / std::sqrt(static_cast<double>(geom.c_in * geom.k));
  for (auto& v : down.data) v = static_cast<T>(sd * rng.normal());
  l.w_conv = Tensor<T>::parameter(w_conv, false);
  l.w_down = Tensor<T>::parameter(std::move(down), true);
  l.w_up = Tensor<T>::parameter(Array<T>({geom.c_out, l.rank, 1}), true);
  return l;
}

template <typename T>
Tensor<T> lora_forward(const Tensor<T>& x, const LoraConv<T>& l, const Tensor<T>& bias) {
  const auto& g = l.geom;
  if (l.w_conv.shape() != num::Shape{g.c_out, g.c_in, g.k} || l.w_down.dim(0) != l.rank ||
      l.w_up.shape() != num::Shape{g.c_out, l.rank, 1}) {
    throw DimensionError("lora_forward: adapter shapes inconsistent with geometry");
  }
  Tensor<T> base = num::conv1d(x, l.w_conv, bias, g.stride, g.padding);
  Tensor<T> low = num::conv1d(x, l.w_down, Tensor<T>(), g.stride, g.padding);
  Tensor<T> delta = num::conv1d(low, l.w_up, Tensor<T>(), 1, 0);
  return num::add(base, num::scale(delta, l.alpha));
}

template <typename T>
Array<T> lora_merge(const LoraConv<T>& l) {
  const auto& g = l.geom;
  Array<T> out = l.w_conv.value();
  const auto up = l.w_up.data();
  const auto down = l.w_down.data();
  const std::size_t ck = g.c_in * g.k;
  for (std::size_t o = 0; o < g.c_out; ++o)
    for (std::size_t q = 0; q < ck; ++q) {
      T acc{0};
      for (std::size_t r = 0; r < l.rank; ++r) acc += up[o * l.rank + r] * down[r * ck + q];
      out.data[o * ck + q] += l.alpha * acc;
    }
  return out;
}

#define DRIFT_INSTANTIATE_LORA(T)                                                                          \
  template LoraConv<T> make_lora(const Array<T>&, const ConvGeometry&, std::size_t, T, num::Rng&);        \
  template Tensor<T> lora_forward(const Tensor<T>&, const LoraConv<T>&, const Tensor<T>&);                \
  template Array<T> lora_merge(const LoraConv<T>&);

DRIFT_INSTANTIATE_LORA(float)
DRIFT_INSTANTIATE_LORA(double)

}  // namespace drift::lowrank
