#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "numerics/adam.hpp"
#include "numerics/flops.hpp"
#include "numerics/linalg.hpp"
#include "numerics/ops.hpp"
#include "numerics/rng.hpp"
#include "support.hpp"

using namespace drift;
using num::Array;
using num::Rng;
using num::Tensor;
using test::random_array;

namespace {

// Direct cross-correlation, zero padding.
Array<double> naive_conv(const Array<double>& x, const Array<double>& w, const std::vector<double>& bias,
                         std::size_t stride, std::size_t pad) {
  const std::size_t B = x.shape[0], ci = x.shape[1], L = x.shape[2], co = w.shape[0], k = w.shape[2];
  const std::size_t lo = (L + 2 * pad - k) / stride + 1;
  Array<double> y({B, co, lo});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t t = 0; t < lo; ++t) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const long pos = static_cast<long>(t * stride + j) - static_cast<long>(pad);
            if (pos < 0 || pos >= static_cast<long>(L)) continue;
            acc += w.data[(o * ci + i) * k + j] * x.data[(b * ci + i) * L + static_cast<std::size_t>(pos)];
          }
        y.data[(b * co + o) * lo + t] = acc;
      }
  return y;
}

}  // namespace

TEST_CASE("matmul agrees with a triple loop") {
  Rng rng(1);
  auto a = random_array({5, 7}, rng), b = random_array({7, 3}, rng);
  auto c = num::matmul(Tensor<double>::constant(a), Tensor<double>::constant(b)).value();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t p = 0; p < 7; ++p) acc += a.data[i * 7 + p] * b.data[p * 3 + j];
      CHECK(c.data[i * 3 + j] == doctest::Approx(acc).epsilon(1e-14));
    }
  auto bt = random_array({3, 7}, rng);
  auto d = num::matmul_nt(Tensor<double>::constant(a), Tensor<double>::constant(bt)).value();
  auto e = num::matmul(Tensor<double>::constant(a), num::transpose(Tensor<double>::constant(bt))).value();
  CHECK(test::max_abs_diff(d.data, e.data) < 1e-14);
}

TEST_CASE("shape mismatches throw DimensionError") {
  Rng rng(2);
  auto a = Tensor<double>::constant(random_array({2, 3}, rng));
  auto b = Tensor<double>::constant(random_array({2, 3}, rng));
  CHECK_THROWS_AS(num::matmul(a, b), DimensionError);
  CHECK_THROWS_AS(num::add(a, Tensor<double>::constant(random_array({3, 2}, rng))), DimensionError);
  CHECK_THROWS_AS(num::conv1d(a, a, Tensor<double>(), 1, 0), DimensionError);
}

TEST_CASE("conv1d agrees with direct cross-correlation") {
  Rng rng(3);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
    auto x = random_array({2, 3, 9}, rng), w = random_array({4, 3, 3}, rng);
    auto bias = random_array({4}, rng);
    auto y = num::conv1d(Tensor<double>::constant(x), Tensor<double>::constant(w), Tensor<double>::constant(bias),
                         stride, pad)
                 .value();
    auto ref = naive_conv(x, w, bias.data, stride, pad);
    REQUIRE(y.shape == ref.shape);
    CHECK(test::max_abs_diff(y.data, ref.data) < 1e-13);
    CHECK(num::conv1d_out_length(9, 3, stride, pad) == ref.shape[2]);
  }
}

TEST_CASE("conv FLOPs are 2 * C_out * C_in * k * B * L_out") {
  Rng rng(4);
  auto x = Tensor<double>::constant(random_array({3, 5, 8}, rng));
  auto w = Tensor<double>::constant(random_array({6, 5, 3}, rng));
  num::FlopCounter::reset();
  num::conv1d(x, w, Tensor<double>(), 1, 1);
  CHECK(num::FlopCounter::read().data == 2ULL * 6 * 5 * 3 * 3 * 8);
  CHECK(num::FlopCounter::read().weight == 0);
  num::FlopCounter::reset();
  {
    num::FlopCategoryScope scope(num::FlopCategory::kWeight);
    num::matmul(Tensor<double>::constant(random_array({4, 5}, rng)), Tensor<double>::constant(random_array({5, 2}, rng)));
  }
  CHECK(num::FlopCounter::read().weight == 2ULL * 4 * 5 * 2);
  CHECK(num::FlopCounter::read().data == 0);
}

TEST_CASE("conv reshape maps (o, i, j) to row o*k + j, column i") {
  Rng rng(5);
  auto w = random_array({3, 4, 2}, rng);
  auto m = num::conv_to_matrix(Tensor<double>::constant(w)).value();
  REQUIRE(m.shape == num::Shape{6, 4});
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(m.data[(o * 2 + j) * 4 + i] == w.data[(o * 4 + i) * 2 + j]);
  auto back = num::matrix_to_conv(Tensor<double>::constant(m), 3, 2).value();
  CHECK(back.data == w.data);
}

TEST_CASE("elementwise and reduction gradients match finite differences") {
  Rng rng(6);
  auto a = Tensor<double>::parameter(random_array({3, 4}, rng));
  auto b = Tensor<double>::parameter(random_array({3, 4}, rng));
  auto target = Tensor<double>::constant(random_array({3, 4}, rng));
  auto loss = [&] {
    auto h = num::silu(num::add(num::mul(a, b), num::scale(num::sigmoid(a), 0.5)));
    return num::add(num::mse(h, target), num::mean(num::sub(h, b)));
  };
  CHECK(test::gradient_error({a, b}, loss) < 1e-7);
}

TEST_CASE("matrix op gradients match finite differences") {
  Rng rng(7);
  auto a = Tensor<double>::parameter(random_array({4, 3}, rng));
  auto b = Tensor<double>::parameter(random_array({3, 5}, rng));
  auto c = Tensor<double>::parameter(random_array({2, 5}, rng));
  auto s = Tensor<double>::parameter(random_array({3}, rng));
  auto loss = [&] {
    auto ab = num::matmul(num::scale_columns(a, s), b);            // 4 x 5
    auto abc = num::matmul_nt(ab, c);                               // 4 x 2
    auto t = num::transpose(num::reshape(abc, {2, 4}));             // 4 x 2
    return num::sum(num::mul(num::slice_cols(t, 1, 1), num::slice_cols(t, 0, 1)));
  };
  CHECK(test::gradient_error({a, b, c, s}, loss) < 1e-7);
}

TEST_CASE("network op gradients match finite differences") {
  Rng rng(8);
  auto x = Tensor<double>::parameter(random_array({2, 3, 6}, rng));
  auto w = Tensor<double>::parameter(random_array({4, 3, 3}, rng));
  auto bias = Tensor<double>::parameter(random_array({4}, rng));
  auto lw = Tensor<double>::parameter(random_array({8, 5}, rng));
  auto lb = Tensor<double>::parameter(random_array({8}, rng));
  auto cond = Tensor<double>::parameter(random_array({2, 5}, rng));
  auto skip = Tensor<double>::parameter(random_array({2, 2, 6}, rng));
  auto loss = [&] {
    auto h = num::conv1d(x, w, bias, 2, 1);  // 2 x 4 x 3
    auto gb = num::linear(cond, lw, lb);     // 2 x 8
    h = num::film(h, num::slice_cols(gb, 0, 4), num::slice_cols(gb, 4, 4));
    auto up = num::upsample_nearest2(h);     // 2 x 4 x 6
    auto cat = num::concat_channels(up, skip);
    return num::mean(num::mul(cat, cat));
  };
  CHECK(test::gradient_error({x, w, bias, lw, lb, cond, skip}, loss) < 1e-7);
}

TEST_CASE("factored conv gradients match finite differences on both routes") {
  Rng rng(9);
  // (c_out, c_in, k, r, batch, length): rank 1 on a wide layer with a short
  // sequence takes the projection route, full rank on a long sequence the dense route.
  for (auto [co, ci, k, r, B, L] : {std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t>{
                                         12, 10, 3, 1, 1, 3},
                                     {3, 4, 3, 4, 2, 9}}) {
    auto u = Tensor<double>::parameter(random_array({co * k, r}, rng));
    auto s = Tensor<double>::parameter(random_array({r}, rng, 0.5, 1.5));
    auto v = Tensor<double>::parameter(random_array({ci, r}, rng));
    auto frozen = random_array({co * k, ci}, rng);
    auto x = Tensor<double>::parameter(random_array({B, ci, L}, rng));
    auto bias = Tensor<double>::parameter(random_array({co}, rng));
    auto target = Tensor<double>::constant(random_array({B, co, L}, rng));
    auto loss = [&] {
      auto train = num::matmul_nt(num::scale_columns(u, s), v);
      Array<double> merged = train.value();
      for (std::size_t i = 0; i < merged.size(); ++i) merged.data[i] += frozen.data[i];
      auto wconv = num::matrix_to_conv(Tensor<double>::constant(merged), co, k).value();
      return num::mse(num::factored_conv1d(x, wconv, u, s, v, bias, 1, k / 2), target);
    };
    CHECK(test::gradient_error({u, s, v, x, bias}, loss) < 1e-7);
  }
}

TEST_CASE("backward accumulates over shared subexpressions and respects NoGradGuard") {
  auto a = Tensor<double>::parameter(Array<double>({2}, std::vector<double>{1.0, -2.0}));
  auto y = num::sum(num::mul(a, a));  // d/da = 2a
  num::backward(y);
  CHECK(a.grad() == std::vector<double>{2.0, -4.0});
  {
    num::NoGradGuard guard;
    CHECK_FALSE(num::grad_enabled());
    auto z = num::sum(num::mul(a, a));
    CHECK_FALSE(z.requires_grad());
  }
  CHECK(num::grad_enabled());
}

TEST_CASE("SVD reconstructs, is orthonormal, sorted, and follows the sign convention") {
  Rng rng(10);
  for (auto [m, n] : {std::pair<std::size_t, std::size_t>{7, 4}, {4, 7}, {6, 6}, {1, 5}}) {
    auto a = random_array({m, n}, rng);
    auto d = num::svd(a);
    const std::size_t p = std::min(m, n);
    REQUIRE(d.s.size() == p);
    for (std::size_t i = 1; i < p; ++i) CHECK(d.s.data[i] <= d.s.data[i - 1]);
    Array<double> us = d.u;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < p; ++j) us.data[i * p + j] *= d.s.data[j];
    auto rec = num::matmul(us, d.vt);
    CHECK(test::max_abs_diff(rec.data, a.data) < 1e-12);
    CHECK(num::orthonormality_error(d.u) < 1e-12);
    CHECK(num::orthonormality_error(num::transpose(d.vt)) < 1e-12);
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t i = 0; i < m; ++i) {
        const double v = d.u.data[i * p + j];
        if (std::abs(v) > 1e-12) {
          CHECK(v > 0);
          break;
        }
      }
    }
  }
}

TEST_CASE("QR orthonormalization spans the input with a non-negative diagonal") {
  Rng rng(11);
  auto a = random_array({8, 3}, rng);
  auto qr = num::qr_orthonormalize(a);
  CHECK_FALSE(qr.rank_deficient);
  CHECK(qr.rank == 3);
  CHECK(num::orthonormality_error(qr.q) < 1e-12);
  for (double d : qr.r_diag.data) CHECK(d >= 0);
  // Q Q^T a == a when a lies in the span of Q.
  auto proj = num::matmul(qr.q, num::matmul(num::transpose(qr.q), a));
  CHECK(test::max_abs_diff(proj.data, a.data) < 1e-12);

  Array<double> dep({5, 2});
  for (std::size_t i = 0; i < 5; ++i) dep.data[i * 2] = dep.data[i * 2 + 1] = static_cast<double>(i + 1);
  auto q2 = num::qr_orthonormalize(dep);
  CHECK(q2.rank_deficient);
  CHECK(q2.rank == 1);
  CHECK(num::orthonormality_error(q2.q) < 1e-12);
}

TEST_CASE("Adam follows the bias-corrected update rule") {
  num::AdamOptions opt{0.1, 0.9, 0.999, 1e-8};
  num::Adam<double> adam(opt);
  auto p = Tensor<double>::parameter(Array<double>({2}, std::vector<double>{1.0, 2.0}));
  auto frozen = Tensor<double>::parameter(Array<double>({1}, std::vector<double>{5.0}), false);
  std::vector<num::NamedParam<double>> params{{"p", p}, {"f", frozen}};
  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {1.0, 2.0};
  for (int step = 1; step <= 3; ++step) {
    adam.zero_grad(params);
    num::backward(num::sum(num::mul(num::mul(p, p), p)));  // grad 3 w^2
    adam.step(params);
    for (int i = 0; i < 2; ++i) {
      const double g = 3 * w[i] * w[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, step)), vh = v[i] / (1 - std::pow(0.999, step));
      w[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(p.data()[0] == doctest::Approx(w[0]).epsilon(1e-12));
    CHECK(p.data()[1] == doctest::Approx(w[1]).epsilon(1e-12));
  }
  CHECK(frozen.data()[0] == 5.0);
  CHECK(adam.slots().count("p") == 1);
  CHECK(adam.slots().count("f") == 0);
  CHECK(adam.slots().at("p").steps == 3);
}

TEST_CASE("Adam restarts moments when a name is rebound and prune drops stale slots") {
  num::Adam<double> adam;
  auto a = Tensor<double>::parameter(Array<double>({1}, std::vector<double>{1.0}));
  auto b = Tensor<double>::parameter(Array<double>({1}, std::vector<double>{1.0}));
  std::vector<num::NamedParam<double>> params{{"a", a}, {"b", b}};
  num::backward(num::sum(num::add(a, b)));
  adam.step(params);
  CHECK(adam.slots().size() == 2);
  auto a2 = Tensor<double>::parameter(Array<double>({1}, std::vector<double>{1.0}));
  adam.prune({{"a", a2}});
  CHECK(adam.slots().empty());
  num::backward(num::sum(a2));
  adam.step({{"a", a2}});
  CHECK(adam.slots().at("a").steps == 1);
}

TEST_CASE("Rng is deterministic, counter based and in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42, 50);
  Rng d(42);
  for (int i = 0; i < 50; ++i) d.next_u64();
  CHECK(c == d);
  Rng r(7);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(r.below(10));
  CHECK(seen.size() == 10);
  CHECK(Rng(1).fork(3).key() != Rng(1).fork(4).key());
}
