#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "numerics/ops.hpp"
#include "numerics/rng.hpp"
#include "numerics/tensor.hpp"

namespace test {

using drift::num::Array;
using drift::num::Shape;
using drift::num::Tensor;

template <typename T = double>
inline Array<T> random_array(Shape shape, drift::num::Rng& rng, double lo = -1, double hi = 1) {
  Array<T> a(std::move(shape));
  for (auto& v : a.data) v = static_cast<T>(rng.uniform(lo, hi));
  return a;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Relative error in the form |a - b| / max(1, |a|, |b|) per element, maximized.
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double s = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    m = std::max(m, std::abs(a[i] - b[i]) / s);
  }
  return m;
}

// Central differences of a scalar function w.r.t. every entry of `param`.
inline std::vector<double> numeric_grad(Tensor<double>& param, const std::function<double()>& f, double h = 1e-6) {
  std::vector<double> g(param.numel());
  auto data = param.mutable_data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + h;
    const double up = f();
    data[i] = saved - h;
    const double down = f();
    data[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// Checks autodiff gradients of loss() against central differences for every parameter.
inline double gradient_error(std::vector<Tensor<double>> params, const std::function<Tensor<double>()>& loss) {
  for (auto& p : params) p.zero_grad();
  drift::num::backward(loss());
  double worst = 0;
  for (auto& p : params) {
    const auto analytic = p.grad();
    const auto numeric = numeric_grad(p, [&] { return loss().item(); });
    worst = std::max(worst, rel_err(analytic, numeric));
  }
  return worst;
}

}  // namespace test
