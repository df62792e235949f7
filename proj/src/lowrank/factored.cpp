#include "lowrank/factored.hpp"

#include <algorithm>
#include <cmath>

#include "numerics/flops.hpp"
#include "numerics/linalg.hpp"
#include "numerics/log.hpp"
#include "numerics/ops.hpp"

namespace drift::lowrank {

namespace {

template <typename T>
Array<T> columns(const Array<double>& a, std::size_t start, std::size_t count) {
  const std::size_t rows = a.rows(), cols = a.cols();
  Array<T> out({rows, count});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < count; ++j) out.data[i * count + j] = static_cast<T>(a.data[i * cols + start + j]);
  return out;
}

// Rows [start, start+count) of vt, transposed into an n x count block.
template <typename T>
Array<T> rows_transposed(const Array<double>& vt, std::size_t start, std::size_t count) {
  const std::size_t n = vt.cols();
  Array<T> out({n, count});
  for (std::size_t j = 0; j < count; ++j)
    for (std::size_t i = 0; i < n; ++i) out.data[i * count + j] = static_cast<T>(vt.data[(start + j) * n + i]);
  return out;
}

template <typename T>
Array<T> segment(const Array<double>& s, std::size_t start, std::size_t count) {
  Array<T> out({count});
  for (std::size_t j = 0; j < count; ++j) out.data[j] = static_cast<T>(s.data[start + j]);
  return out;
}

// u diag(s) v^T evaluated in double, then rounded to T.
template <typename T>
Array<T> low_rank_product(const Array<T>& u, const Array<T>& s, const Array<T>& v, std::size_t m, std::size_t n) {
  Array<T> out({m, n});
  const std::size_t r = s.size();
  if (r == 0) return out;
  Array<double> us({m, r});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < r; ++j) us.data[i * r + j] = double(u.data[i * r + j]) * double(s.data[j]);
  Array<double> vt({r, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < r; ++j) vt.data[j * n + i] = double(v.data[i * r + j]);
  const Array<double> prod = num::matmul(us, vt);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = static_cast<T>(prod.data[i]);
  return out;
}

template <typename T>
FactoredMatrix<T> partition(const Array<double>& w, std::size_t r) {
  const num::SvdResult dec = num::svd(w);
  const std::size_t p = dec.s.size();
  return assemble_factored<T>(columns<T>(dec.u, 0, r), segment<T>(dec.s, 0, r), rows_transposed<T>(dec.vt, 0, r),
                              columns<T>(dec.u, r, p - r), segment<T>(dec.s, r, p - r),
                              rows_transposed<T>(dec.vt, r, p - r));
}

}  // namespace

Array<double> reshape_conv_to_matrix(const Array<double>& w) {
  auto t = num::conv_to_matrix(Tensor<double>::constant(w));
  return t.value();
}

Array<double> reshape_matrix_to_conv(const Array<double>& w, std::size_t c_out, std::size_t k) {
  auto t = num::matrix_to_conv(Tensor<double>::constant(w), c_out, k);
  return t.value();
}

template <typename T>
FactoredMatrix<T> svd_partition(const Array<T>& w, std::size_t r) {
  if (w.ndim() != 2) throw DimensionError("svd_partition: expected a matrix, got " + num::shape_str(w.shape));
  const std::size_t p = std::min(w.rows(), w.cols());
  if (p == 0) throw DimensionError("svd_partition: empty matrix " + num::shape_str(w.shape));
  const std::size_t clamped = std::clamp<std::size_t>(r, 1, p);
  if (clamped != r) {
    log_warning("svd_partition: rank " + std::to_string(r) + " outside [1, " + std::to_string(p) +
                "], clamped to " + std::to_string(clamped));
  }
  return partition<T>(w.template cast<double>(), clamped);
}

template <typename T>
FactoredMatrix<T> assemble_factored(Array<T> u_train, Array<T> s_train, Array<T> v_train, Array<T> u_frozen,
                                    Array<T> s_frozen, Array<T> v_frozen) {
  FactoredMatrix<T> f;
  f.m = u_train.rows();
  f.n = v_train.rows();
  f.rank = s_train.size();
  f.p = f.rank + s_frozen.size();
  const bool consistent = u_train.cols() == f.rank && v_train.cols() == f.rank && u_frozen.rows() == f.m &&
                          v_frozen.rows() == f.n && u_frozen.cols() == s_frozen.size() &&
                          v_frozen.cols() == s_frozen.size() && f.p == std::min(f.m, f.n) && f.rank >= 1;
  if (!consistent) throw DimensionError("assemble_factored: inconsistent factor shapes");
  f.w_frozen = Tensor<T>::constant(low_rank_product(u_frozen, s_frozen, v_frozen, f.m, f.n));
  f.u_train = Tensor<T>::parameter(std::move(u_train), true);
  f.s_train = Tensor<T>::parameter(std::move(s_train), true);
  f.v_train = Tensor<T>::parameter(std::move(v_train), true);
  f.u_frozen = Tensor<T>::parameter(std::move(u_frozen), false);
  f.s_frozen = Tensor<T>::parameter(std::move(s_frozen), false);
  f.v_frozen = Tensor<T>::parameter(std::move(v_frozen), false);
  return f;
}

template <typename T>
Tensor<T> merge(const FactoredMatrix<T>& f) {
  num::FlopCategoryScope scope(num::FlopCategory::kWeight);
  Tensor<T> w_train = num::matmul_nt(num::scale_columns(f.u_train, f.s_train), f.v_train);
  return num::add(w_train, f.w_frozen);
}

template <typename T>
Array<T> merged_value(const FactoredMatrix<T>& f) {
  num::NoGradGuard guard;
  return merge(f).value();
}

template <typename T>
Tensor<T> factored_conv_forward(const Tensor<T>& x, const FactoredMatrix<T>& f, const ConvGeometry& geom,
                                const Tensor<T>& bias) {
  if (geom.m() != f.m || geom.n() != f.n) {
    throw DimensionError("factored_conv_forward: geometry expects " + std::to_string(geom.m()) + "x" +
                         std::to_string(geom.n()) + " weight, factorization is " + std::to_string(f.m) + "x" +
                         std::to_string(f.n));
  }
  Array<T> w;
  {
    num::NoGradGuard guard;
    w = num::matrix_to_conv(merge(f), geom.c_out, geom.k).value();
  }
  return num::factored_conv1d(x, w, f.u_train, f.s_train, f.v_train, bias, geom.stride, geom.padding);
}

template <typename T>
FactoredMatrix<T> set_trainable_rank(const FactoredMatrix<T>& f, std::size_t r_new) {
  const std::size_t r = std::clamp<std::size_t>(r_new, 1, f.p);
  if (r == f.rank) return f;
  Array<double> w;
  {
    num::NoGradGuard guard;
    w = merge(f).value().template cast<double>();
  }
  return partition<T>(w, r);
}

template <typename T>
QrRefreshInfo qr_refresh(FactoredMatrix<T>& f) {
  const std::size_t r = f.rank;
  const auto qu = num::qr_orthonormalize(f.u_train.value().template cast<double>());
  const auto qv = num::qr_orthonormalize(f.v_train.value().template cast<double>());
  auto u = f.u_train.mutable_data();
  auto v = f.v_train.mutable_data();
  auto s = f.s_train.mutable_data();
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = static_cast<T>(qu.q.data[i]);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(qv.q.data[i]);
  for (std::size_t j = 0; j < r; ++j) {
    s[j] = static_cast<T>(double(s[j]) * qu.r_diag.data[j] * qv.r_diag.data[j]);
  }
  return {qu.rank_deficient, qv.rank_deficient};
}

#define DRIFT_INSTANTIATE_FACTORED(T)                                                                       \
  template FactoredMatrix<T> svd_partition(const Array<T>&, std::size_t);                                   \
  template FactoredMatrix<T> assemble_factored(Array<T>, Array<T>, Array<T>, Array<T>, Array<T>, Array<T>); \
  template Tensor<T> merge(const FactoredMatrix<T>&);                                                       \
  template Array<T> merged_value(const FactoredMatrix<T>&);                                                 \
  template Tensor<T> factored_conv_forward(const Tensor<T>&, const FactoredMatrix<T>&, const ConvGeometry&, \
                                           const Tensor<T>&);                                               \
  template FactoredMatrix<T> set_trainable_rank(const FactoredMatrix<T>&, std::size_t);                     \
  template QrRefreshInfo qr_refresh(FactoredMatrix<T>&);

DRIFT_INSTANTIATE_FACTORED(float)
DRIFT_INSTANTIATE_FACTORED(double)

}  // namespace drift::lowrank
