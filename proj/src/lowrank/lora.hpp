#pragma once

#include "lowrank/factored.hpp"
#include "numerics/rng.hpp"

namespace drift::lowrank {

// Frozen base convolution plus a trainable low-rank adapter path:
//   y = W_conv * x + alpha * (W_up x W_down) * x
// evaluated as a rank-r convolution followed by a 1x1 channel mix.
template <typename T>
struct LoraConv {
  Tensor<T> w_conv;  // C_out x C_in x k, frozen while adapted
  Tensor<T> w_down;  // r x C_in x k
  Tensor<T> w_up;    // C_out x r x 1
  T alpha = T{1};
  std::size_t rank = 0;
  ConvGeometry geom;
};

// w_down ~ N(0, 1/(C_in*k)), w_up = 0. Rank is clamped to [1, geom.max_rank()].
template <typename T>
LoraConv<T> make_lora(const Array<T>& w_conv, const ConvGeometry& geom, std::size_t rank, T alpha, num::Rng& rng);

template <typename T>
Tensor<T> lora_forward(const Tensor<T>& x, const LoraConv<T>& l, const Tensor<T>& bias);

// w_conv + alpha * (w_up x w_down), shaped C_out x C_in x k.
template <typename T>
Array<T> lora_merge(const LoraConv<T>& l);

template <typename T>
std::size_t trainable_param_count(const LoraConv<T>& l) {
  return l.rank * (l.geom.c_in * l.geom.k + l.geom.c_out);
}

}  // namespace drift::lowrank
