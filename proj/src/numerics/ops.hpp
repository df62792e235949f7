#pragma once

#include <cstddef>

#include "numerics/tensor.hpp"

// Differentiable operations. Every op checks shapes and throws DimensionError
// on mismatch; gradients flow only to inputs that require them.
namespace drift::num {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);

template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
// x * sigmoid(x)
template <typename T> Tensor<T> silu(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target);

// (m x k) * (k x n)
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// (m x k) * (n x k)^T
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
// a (m x r) * diag(s), s of length r
template <typename T> Tensor<T> scale_columns(const Tensor<T>& a, const Tensor<T>& s);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// (C_out*k x C_in) <-> (C_out x C_in x k); row index o*k + j, column i.
template <typename T> Tensor<T> matrix_to_conv(const Tensor<T>& w, std::size_t c_out, std::size_t k);
template <typename T> Tensor<T> conv_to_matrix(const Tensor<T>& w);

// Cross-correlation. x: B x C_in x L, w: C_out x C_in x k, bias: C_out (may be undefined).
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding);
// conv1d with weight = matrix_to_conv(u diag(s) v^T + frozen part), passed as
// its merged value. Gradients flow to x, the factors u (C_out*k x r), s, v
// (C_in x r) and bias; the factor gradients take the cheaper of a dense
// weight-gradient route and a route through the rank-r projections.
template <typename T>
Tensor<T> factored_conv1d(const Tensor<T>& x, const Array<T>& weight, const Tensor<T>& u, const Tensor<T>& s,
                          const Tensor<T>& v, const Tensor<T>& bias, std::size_t stride, std::size_t padding);
std::size_t conv1d_out_length(std::size_t length, std::size_t k, std::size_t stride, std::size_t padding);

// x: B x N_in, w: N_out x N_in, b: N_out (may be undefined)
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
// Columns [start, start+count) of a 2-D tensor.
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t count);

template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> upsample_nearest2(const Tensor<T>& x);
// h: B x C x L; gamma, beta: B x C. out = h * (1 + gamma) + beta
template <typename T> Tensor<T> film(const Tensor<T>& h, const Tensor<T>& gamma, const Tensor<T>& beta);

}  // namespace drift::num
