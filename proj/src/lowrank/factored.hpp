#pragma once

#include <cstddef>

#include "numerics/array.hpp"
#include "numerics/tensor.hpp"

namespace drift::lowrank {

using num::Array;
using num::Tensor;

struct ConvGeometry {
  std::size_t c_out = 1;
  std::size_t c_in = 1;
  std::size_t k = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  // Reshaped weight is (c_out * k) x c_in.
  std::size_t m() const { return c_out * k; }
  std::size_t n() const { return c_in; }
  std::size_t max_rank() const { return m() < n() ? m() : n(); }
  bool operator==(const ConvGeometry&) const = default;
};

Array<double> reshape_conv_to_matrix(const Array<double>& w);
Array<double> reshape_matrix_to_conv(const Array<double>& w, std::size_t c_out, std::size_t k);

// W = u_train diag(s_train) v_train^T + u_frozen diag(s_frozen) v_frozen^T.
// Only the *_train factors require grad. w_frozen caches the frozen product.
template <typename T>
struct FactoredMatrix {
  Tensor<T> u_train;   // m x r
  Tensor<T> s_train;   // r
  Tensor<T> v_train;   // n x r
  Tensor<T> u_frozen;  // m x (p - r)
  Tensor<T> s_frozen;  // p - r
  Tensor<T> v_frozen;  // n x (p - r)
  Tensor<T> w_frozen;  // m x n, constant
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t rank = 0;
  std::size_t p = 0;
};

// Full SVD of w split at rank r (clamped to [1, min(m, n)] with a warning).
template <typename T>
FactoredMatrix<T> svd_partition(const Array<T>& w, std::size_t r);

// Rebuilds a factorization from stored factors (checkpoint restore).
template <typename T>
FactoredMatrix<T> assemble_factored(Array<T> u_train, Array<T> s_train, Array<T> v_train, Array<T> u_frozen,
                                    Array<T> s_frozen, Array<T> v_frozen);

// Effective weight, differentiable w.r.t. the trainable factors only.
template <typename T>
Tensor<T> merge(const FactoredMatrix<T>& f);

// Effective weight as a plain value (no graph).
template <typename T>
Array<T> merged_value(const FactoredMatrix<T>& f);

// Single convolution with the merged weight; data-path cost equals a plain conv.
template <typename T>
Tensor<T> factored_conv_forward(const Tensor<T>& x, const FactoredMatrix<T>& f, const ConvGeometry& geom,
                                const Tensor<T>& bias);

// Re-SVD of the merged weight and re-partition at r_new (clamped to [1, p]).
// Returns f itself, same parameter nodes, when the clamped rank is unchanged.
template <typename T>
FactoredMatrix<T> set_trainable_rank(const FactoredMatrix<T>& f, std::size_t r_new);

struct QrRefreshInfo {
  bool u_rank_deficient = false;
  bool v_rank_deficient = false;
};

// Re-orthonormalizes u_train and v_train in place; the triangular factors are
// folded into s_train through their diagonals only.
template <typename T>
QrRefreshInfo qr_refresh(FactoredMatrix<T>& f);

template <typename T>
std::size_t trainable_param_count(const FactoredMatrix<T>& f) {
  return f.rank * (f.m + f.n + 1);
}

}  // namespace drift::lowrank
