#pragma once

#include <cstddef>

#include "numerics/array.hpp"

// Non-differentiated kernels. Both are re-parameterization events and never
// appear in the autodiff graph.
namespace drift::num {

struct SvdResult {
  Array<double> u;   // m x p
  Array<double> s;   // p, non-increasing, >= 0
  Array<double> vt;  // p x n
};

// Thin SVD, p = min(m, n). Sign convention: the first entry of each U column
// whose magnitude exceeds 1e-12 is positive (V adjusted to match).
SvdResult svd(const Array<double>& a);

struct QrResult {
  Array<double> q;          // m x r, orthonormal columns
  bool rank_deficient = false;
  std::size_t rank = 0;     // numerical rank of the input
  Array<double> r_diag;     // diagonal of R (non-negative by sign choice)
};

// Thin Householder QR with diag(R) >= 0. Dependent columns are completed with
// arbitrary orthonormal directions and reported via rank_deficient.
QrResult qr_orthonormalize(const Array<double>& a);

Array<double> matmul(const Array<double>& a, const Array<double>& b);
Array<double> transpose(const Array<double>& a);
double frobenius_norm(const Array<double>& a);
// ||A^T A - I||_max over the columns of a.
double orthonormality_error(const Array<double>& a);

}  // namespace drift::num
