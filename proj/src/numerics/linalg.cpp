#include "numerics/linalg.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

namespace drift::num {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const MatR> view(const Array<double>& a) {
  return Eigen::Map<const MatR>(a.data.data(), static_cast<Eigen::Index>(a.rows()),
                                static_cast<Eigen::Index>(a.cols()));
}

Array<double> to_array(const MatR& m) {
  Array<double> out({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<MatR>(out.data.data(), m.rows(), m.cols()) = m;
  return out;
}

void require_matrix(const Array<double>& a, const char* op) {
  if (a.ndim() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape));
}

}  // namespace

SvdResult svd(const Array<double>& a) {
  require_matrix(a, "svd");
  for (double v : a.data) {
    if (!std::isfinite(v)) throw NumericalError("svd: input contains non-finite entries");
  }
  const Eigen::Index m = static_cast<Eigen::Index>(a.rows()), n = static_cast<Eigen::Index>(a.cols());
  const Eigen::Index p = std::min(m, n);
  MatR U(m, p), Vt(p, n);
  Eigen::VectorXd S(p);
  if (p == 0) return {to_array(U), Array<double>({0}), to_array(Vt)};

  Eigen::BDCSVD<Eigen::MatrixXd> dec(Eigen::MatrixXd(view(a)), Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) {
    throw NumericalError("svd: decomposition of " + shape_str(a.shape) + " did not converge (Eigen info " +
                         std::to_string(static_cast<int>(dec.info())) + ")");
  }
  U = dec.matrixU();
  Vt = dec.matrixV().transpose();
  S = dec.singularValues();

  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::abs(U(i, j)) > 1e-12) {
        if (U(i, j) < 0) {
          U.col(j) *= -1.0;
          Vt.row(j) *= -1.0;
        }
        break;
      }
    }
  }
  Array<double> s({static_cast<std::size_t>(p)});
  for (Eigen::Index j = 0; j < p; ++j) s.data[j] = S(j);
  return {to_array(U), std::move(s), to_array(Vt)};
}

QrResult qr_orthonormalize(const Array<double>& a) {
  require_matrix(a, "qr_orthonormalize");
  const Eigen::Index m = static_cast<Eigen::Index>(a.rows()), r = static_cast<Eigen::Index>(a.cols());
  if (r > m) throw DimensionError("qr_orthonormalize: more columns than rows in " + shape_str(a.shape));
  QrResult out;
  out.r_diag = Array<double>({static_cast<std::size_t>(r)});
  if (r == 0) {
    out.q = Array<double>({static_cast<std::size_t>(m), 0});
    return out;
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> dec{Eigen::MatrixXd(view(a))};
  Eigen::MatrixXd Q = dec.householderQ() * Eigen::MatrixXd::Identity(m, r);
  const Eigen::MatrixXd& R = dec.matrixQR();
  double scale = 0.0;
  for (Eigen::Index j = 0; j < r; ++j) scale = std::max(scale, std::abs(R(j, j)));
  const double tol = std::max(scale, 1.0) * 1e-12 * static_cast<double>(std::max(m, r));
  for (Eigen::Index j = 0; j < r; ++j) {
    double d = R(j, j);
    if (d < 0) {
      Q.col(j) *= -1.0;
      d = -d;
    }
    out.r_diag.data[j] = d;
    if (d > tol) ++out.rank;
  }
  out.rank_deficient = out.rank < static_cast<std::size_t>(r);
  out.q = to_array(MatR(Q));
  return out;
}

Array<double> matmul(const Array<double>& a, const Array<double>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) throw DimensionError("matmul: " + shape_str(a.shape) + " * " + shape_str(b.shape));
  return to_array(view(a) * view(b));
}

Array<double> transpose(const Array<double>& a) {
  require_matrix(a, "transpose");
  return to_array(view(a).transpose());
}

double frobenius_norm(const Array<double>& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v * v;
  return std::sqrt(acc);
}

double orthonormality_error(const Array<double>& a) {
  require_matrix(a, "orthonormality_error");
  if (a.cols() == 0) return 0.0;
  const auto A = view(a);
  const Eigen::MatrixXd G = A.transpose() * A;
  return (G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
}

}  // namespace drift::num
