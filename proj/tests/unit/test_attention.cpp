// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "svrattn/attention.hpp"
#include "svrattn/errors.hpp"

using namespace svrattn;

namespace {

// Moving-window oracle, zero padded, out[i] = sum_t w[t] x[i + t - half].
Matrix conv1d_oracle(const Matrix& x, const std::vector<double>& w) {
  const long half = static_cast<long>(w.size() / 2);
  Matrix out(x.rows(), x.cols());
  for (long i = 0; i < static_cast<long>(x.rows()); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      long double s = 0;
      for (long t = 0; t < static_cast<long>(w.size()); ++t) {
        const long src = i + t - half;
        if (src >= 0 && src < static_cast<long>(x.rows())) s += w[t] * x(src, c);
      }
      out(i, c) = static_cast<double>(s);
    }
  return out;
}

Matrix conv2d_oracle(const Matrix& x, const Matrix& w, long gh, long gw) {
  const long half = static_cast<long>(w.rows() / 2);
  Matrix out(x.rows(), x.cols());
  for (long r = 0; r < gh; ++r)
    for (long c = 0; c < gw; ++c)
      for (std::size_t ch = 0; ch < x.cols(); ++ch) {
        long double s = 0;
        for (long a = 0; a < static_cast<long>(w.rows()); ++a)
          for (long b = 0; b < static_cast<long>(w.cols()); ++b) {
            const long rr = r + a - half, cc = c + b - half;
            if (rr >= 0 && rr < gh && cc >= 0 && cc < gw) s += w(a, b) * x(rr * gw + cc, ch);
          }
        out(r * gw + c, ch) = static_cast<double>(s);
      }
  return out;
}

Matrix softmax_h(const Matrix& q, const Matrix& k, const Matrix& v) {
  return oracle::softmax_attention(q, k, v).h;
}

bool row_sums_one(const Matrix& a, double tol) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0;
    for (double x : a.row(i)) s += x;
    if (std::abs(s - 1) > tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("softmax attention hand examples") {
  const Matrix q = Matrix::from_rows({{1, 0}}), k = Matrix::from_rows({{1, 0}, {0, 1}}),
               v = Matrix::from_rows({{1}, {0}});
  const double e = std::exp(1 / std::sqrt(2.0));
  CHECK(softmax_attention(q, k, v).h(0, 0) == doctest::Approx(e / (e + 1)).epsilon(1e-15));
  CHECK(softmax_attention(q, k, v).h(0, 0) == doctest::Approx(0.6699).epsilon(1e-4));

  SplitMix64 rng(41);
  const Matrix q3 = oracle::random(rng, 3, 2);
  const Matrix k1 = Matrix::from_rows({{0.2, -0.7}}), v1 = Matrix::from_rows({{3, -4, 5}});
  const Matrix h1 = softmax_attention(q3, k1, v1).h;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 3; ++c) CHECK(h1(i, c) == v1(0, c));

  const Matrix same = Matrix::from_rows({{0.4, 0.1}, {0.4, 0.1}, {0.4, 0.1}});
  const Matrix v3 = oracle::random(rng, 3, 2);
  const Matrix hs = softmax_attention(q3, same, v3).h;
  const Matrix mean = col_mean(v3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(hs(i, c) - mean(0, c)) < 1e-15);
}

TEST_CASE("softmax attention matches the long double oracle") {
  SplitMix64 rng(42);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = rng.range(1, 9), m = rng.range(1, 9), d = rng.range(1, 6), dv = rng.range(1, 4);
    const Matrix q = oracle::random(rng, n, d, -2, 2), k = oracle::random(rng, m, d, -2, 2),
                 v = oracle::random(rng, m, dv);
    const auto out = softmax_attention(q, k, v);
    const auto ref = oracle::softmax_attention(q, k, v);
    CHECK(max_abs_diff(out.h, ref.h) < 1e-14);
    REQUIRE(out.a.has_value());
    CHECK(max_abs_diff(*out.a, ref.a) < 1e-15);
    CHECK(row_sums_one(*out.a, 1e-12));
  }
}

TEST_CASE("shape errors name the offending pair") {
  try {
    (void)softmax_attention(Matrix(2, 3), Matrix(2, 2), Matrix(2, 1));
    FAIL("no throw");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("2x2") != std::string::npos);
  }
  CHECK_THROWS_AS(softmax_attention(Matrix(2, 2), Matrix(3, 2), Matrix(2, 1)), ShapeError);
}

TEST_CASE("linear attention") {
  SplitMix64 rng(43);
  const auto elu = FeatureMapSpec::elu_plus_one(2);
  const Matrix q = oracle::random(rng, 4, 2), v1 = Matrix::from_rows({{0.25, -1}});
  const Matrix h1 = linear_attention(q, Matrix::from_rows({{0.3, 0.9}}), v1, elu);
  for (std::size_t i = 0; i < 4; ++i) CHECK(max_abs_diff(Matrix::from_rows({{h1(i, 0), h1(i, 1)}}), v1) < 1e-15);

  const Matrix same = Matrix::from_rows({{-0.3, 0.2}, {-0.3, 0.2}, {-0.3, 0.2}});
  const Matrix v3 = oracle::random(rng, 3, 2);
  const Matrix hs = linear_attention(q, same, v3, elu);
  const Matrix mean = col_mean(v3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(hs(i, c) - mean(0, c)) < 1e-14);

  SUBCASE("degree ten tracks softmax on unit rows") {
    for (int t = 0; t < 50; ++t) {
      Matrix qu = oracle::random(rng, rng.range(1, 6), 2), ku = oracle::random(rng, rng.range(1, 6), 2);
      for (Matrix* m : {&qu, &ku})
        for (std::size_t i = 0; i < m->rows(); ++i) {
          const double n = std::hypot((*m)(i, 0), (*m)(i, 1));
          (*m)(i, 0) /= n;
          (*m)(i, 1) /= n;
        }
      const Matrix vu = oracle::random(rng, ku.rows(), 3);
      CHECK(max_abs_diff(linear_attention(qu, ku, vu, FeatureMapSpec::exp_truncated(10, 2)), softmax_h(qu, ku, vu)) <
            1e-5);
    }
  }
  SUBCASE("matches the explicit kernel-weighted average") {
    const auto f = FeatureMapSpec::exp_truncated(4, 3);
    const Matrix qq = oracle::random(rng, 5, 3), kk = oracle::random(rng, 4, 3), vv = oracle::random(rng, 4, 2);
    const Matrix h = linear_attention(qq, kk, vv, f);
    for (std::size_t i = 0; i < 5; ++i) {
      double z = 0, num[2] = {0, 0};
      for (std::size_t j = 0; j < 4; ++j) {
        const double w = kernel_eval(f, qq.row(i), kk.row(j));
        z += w;
        num[0] += w * vv(j, 0);
        num[1] += w * vv(j, 1);
      }
      CHECK(std::abs(h(i, 0) - num[0] / z) < 1e-12);
      CHECK(std::abs(h(i, 1) - num[1] / z) < 1e-12);
    }
  }
  SUBCASE("nonpositive normalizer names the row") {
    const auto id = FeatureMapSpec::identity(1);
    const Matrix qq = Matrix::from_rows({{1}, {-1}}), kk = Matrix::from_rows({{1}}), vv = Matrix::from_rows({{1}});
    try {
      (void)linear_attention(qq, kk, vv, id);
      FAIL("no throw");
    } catch (const NumericalDomainError& e) {
      CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
  }
}

TEST_CASE("sparse attention") {
  SplitMix64 rng(44);
  const Matrix q = oracle::random(rng, 3, 2), k = oracle::random(rng, 3, 2), v = oracle::random(rng, 3, 2);
  CHECK(max_abs_diff(sparse_attention(q, k, v, Mask(3, 3, true)).h, softmax_attention(q, k, v).h) <= 1e-12);

  Mask single(3, 3, false);
  const std::size_t pick[] = {2, 0, 2};
  for (std::size_t i = 0; i < 3; ++i) single.set(i, pick[i], true);
  const Matrix hs = sparse_attention(q, k, v, single).h;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 2; ++c) CHECK(hs(i, c) == v(pick[i], c));

  const Mask band = Mask::band(3, 3, 1);
  CHECK_FALSE(band(0, 2));
  CHECK(band(1, 2));
  const auto out = sparse_attention(q, k, v, band);
  const auto ref = oracle::softmax_attention(q, k, v, [&](std::size_t i, std::size_t j) { return band(i, j); });
  CHECK(max_abs_diff(out.h, ref.h) < 1e-14);
  CHECK((*out.a)(0, 2) == 0.0);

  Mask bad(3, 3, true);
  for (std::size_t j = 0; j < 3; ++j) bad.set(1, j, false);
  try {
    (void)sparse_attention(q, k, v, bad);
    FAIL("no throw");
  } catch (const ParameterError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
  CHECK_THROWS_AS(sparse_attention(q, k, v, Mask(2, 3)), ShapeError);
}

TEST_CASE("bn statistics") {
  const auto one = bn_stats(Matrix::from_rows({{0.5, -2}}), 1e-5);
  CHECK(one.mu == std::vector<double>{0.5, -2});
  CHECK(one.sigma2 == std::vector<double>{0, 0});
  CHECK(one.s_inv[0] == doctest::Approx(1 / std::sqrt(1e-5)));

  const auto two = bn_stats(Matrix::from_rows({{0}, {2}}), 1e-5);
  CHECK(two.mu[0] == 1);
  CHECK(two.sigma2[0] == 1);

  SplitMix64 rng(45);
  const Matrix k = oracle::random(rng, 5, 3);
  const auto st = bn_stats(k, 1e-5);
  for (std::size_t c = 0; c < 3; ++c) {
    long double m = 0, var = 0;
    for (std::size_t j = 0; j < 5; ++j) m += k(j, c);
    m /= 5;
    for (std::size_t j = 0; j < 5; ++j) var += (k(j, c) - m) * (k(j, c) - m);
    var /= 5;
    CHECK(std::abs(st.mu[c] - static_cast<double>(m)) < 1e-12);
    CHECK(std::abs(st.sigma2[c] - static_cast<double>(var)) < 1e-12);
    CHECK(std::abs(st.s_inv[c] - 1 / std::sqrt(static_cast<double>(var) + 1e-5)) < 1e-12);
  }
  CHECK_THROWS_AS(bn_stats(k, 0.0), ParameterError);
}

TEST_CASE("bn attention") {
  SplitMix64 rng(46);
  const Matrix q = oracle::random(rng, 3, 2), k = oracle::random(rng, 3, 2), v = oracle::random(rng, 3, 2);

  BnSpec recenter{BnMode::RecenterOnly, 0.0, 1e-5};
  const auto r0 = bn_attention(q, k, v, recenter);
  const auto s = softmax_attention(q, k, v);
  CHECK(r0.h == s.h);
  CHECK(*r0.a == *s.a);

  const Matrix same = Matrix::from_rows({{0.4, 0.1}, {0.4, 0.1}, {0.4, 0.1}});
  const auto u = bn_attention(q, same, v, BnSpec{});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK((*u.a)(i, j) == doctest::Approx(1.0 / 3));
  CHECK(max_abs_diff(u.h, Matrix::from_rows({{col_mean(v)(0, 0), col_mean(v)(0, 1)}, {col_mean(v)(0, 0), col_mean(v)(0, 1)}, {col_mean(v)(0, 0), col_mean(v)(0, 1)}})) < 1e-15);
  const auto ue = bn_attention_expanded(q, same, v, 1e-5);
  CHECK(max_abs_diff(ue.h, u.h) < 1e-15);

  SUBCASE("FullBN equals direct evaluation of the normalized form") {
    const auto st = bn_stats(k, 1e-5);
    Matrix qn = q, kn = k;
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < 3; ++i) qn(i, c) = (q(i, c) - st.mu[c]) * st.s_inv[c];
      for (std::size_t j = 0; j < 3; ++j) kn(j, c) = (k(j, c) - st.mu[c]) * st.s_inv[c];
    }
    CHECK(max_abs_diff(bn_attention(q, k, v, BnSpec{}).h, softmax_h(qn, kn, v)) < 1e-10);
  }
  SUBCASE("RecenterOnly subtracts beta times the key mean") {
    const double beta = 0.7;
    const auto st = bn_stats(k, 1e-5);
    Matrix qn = q, kn = k;
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < 3; ++i) qn(i, c) -= beta * st.mu[c];
      for (std::size_t j = 0; j < 3; ++j) kn(j, c) -= beta * st.mu[c];
    }
    CHECK(max_abs_diff(bn_attention(q, k, v, BnSpec{BnMode::RecenterOnly, beta, 1e-5}).h, softmax_h(qn, kn, v)) <
          1e-13);
  }
  SUBCASE("expanded form agrees on random instances") {
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = rng.range(1, 16), m = rng.range(1, 16), d = rng.range(1, 8);
      const Matrix qq = oracle::random(rng, n, d), kk = oracle::random(rng, m, d), vv = oracle::random(rng, m, 2);
      CHECK(max_abs_diff(bn_attention(qq, kk, vv, BnSpec{}).h, bn_attention_expanded(qq, kk, vv, 1e-5).h) < 1e-10);
    }
    const Matrix v1 = Matrix::from_rows({{2, 3}});
    CHECK(max_abs_diff(bn_attention_expanded(oracle::random(rng, 1, 2), oracle::random(rng, 1, 2), v1, 1e-5).h,
                       v1) < 1e-15);
  }
}

TEST_CASE("conv1d") {
  SplitMix64 rng(47);
  const Matrix q = oracle::random(rng, 4, 2), k = oracle::random(rng, 4, 2), v = oracle::random(rng, 4, 3);
  const Matrix ref = softmax_attention(q, k, v).h;
  CHECK(max_abs_diff(conv1d_attention(q, k, v, Conv1DSpec{{1.0}, {}}).h, ref) <= 1e-12);
  CHECK(max_abs_diff(conv1d_attention(q, k, v, Conv1DSpec{{0, 1, 0}, {}}).h, ref) <= 1e-12);

  const std::vector<double> avg{1.0 / 3, 1.0 / 3, 1.0 / 3};
  const Matrix h = conv1d_attention(q, k, v, Conv1DSpec{avg, {}}).h;
  CHECK(max_abs_diff(h, softmax_h(conv1d_oracle(q, avg), conv1d_oracle(k, avg), v)) < 1e-14);

  const std::vector<double> asym{0.2, -0.5, 1.1, 0.3, 0.9};
  CHECK(max_abs_diff(conv1d_same(q, asym), conv1d_oracle(q, asym)) < 1e-15);

  const std::vector<double> kk{0.5, 0.5, 0.0};
  const Matrix hk = conv1d_attention(q, k, v, Conv1DSpec{avg, kk}).h;
  CHECK(max_abs_diff(hk, softmax_h(conv1d_oracle(q, avg), conv1d_oracle(k, kk), v)) < 1e-14);

  CHECK_THROWS_AS(conv1d_attention(q, k, v, Conv1DSpec{{0.5, 0.5}, {}}), ParameterError);
}

TEST_CASE("conv2d") {
  SplitMix64 rng(48);
  const Matrix q = oracle::random(rng, 6, 2), k = oracle::random(rng, 6, 2), v = oracle::random(rng, 6, 2);
  const Matrix ref = softmax_attention(q, k, v).h;
  CHECK(max_abs_diff(conv2d_attention(q, k, v, Conv2DSpec{Matrix::from_rows({{1}}), {}, 2, 3}).h, ref) <= 1e-12);
  Matrix delta(3, 3);
  delta(1, 1) = 1;
  CHECK(max_abs_diff(conv2d_attention(q, k, v, Conv2DSpec{delta, {}, 3, 2}).h, ref) <= 1e-12);

  const Matrix q4 = oracle::random(rng, 4, 2), k4 = oracle::random(rng, 4, 2), v4 = oracle::random(rng, 4, 2);
  const Matrix avg = Matrix::filled(3, 3, 1.0 / 9);
  CHECK(max_abs_diff(conv2d_attention(q4, k4, v4, Conv2DSpec{avg, {}, 2, 2}).h,
                     softmax_h(conv2d_oracle(q4, avg, 2, 2), conv2d_oracle(k4, avg, 2, 2), v4)) < 1e-14);

  const Matrix w = oracle::random(rng, 3, 3);
  CHECK(max_abs_diff(conv2d_same(q, w, 2, 3), conv2d_oracle(q, w, 2, 3)) < 1e-15);

  CHECK_THROWS_AS(conv2d_attention(q, k, v, Conv2DSpec{delta, {}, 2, 2}), ParameterError);
  CHECK_THROWS_AS(conv2d_attention(q, k, v, Conv2DSpec{Matrix(2, 2), {}, 2, 3}), ParameterError);
}

TEST_CASE("full residual") {
  SplitMix64 rng(49);
  const Matrix x = oracle::random(rng, 3, 4), wq = oracle::random(rng, 2, 4), wk = oracle::random(rng, 2, 4),
               wv = oracle::random(rng, 4, 4);
  CHECK(full_residual_attention(x, wq, wk, Matrix(4, 4)) == x);

  const Matrix x1 = oracle::random(rng, 1, 4);
  const Matrix h1 = full_residual_attention(x1, wq, wk, wv);
  CHECK(max_abs_diff(h1, add(oracle::matmul_nt(x1, wv), x1)) < 1e-15);

  const Matrix want = add(softmax_h(oracle::matmul_nt(x, wq), oracle::matmul_nt(x, wk), oracle::matmul_nt(x, wv)), x);
  CHECK(max_abs_diff(full_residual_attention(x, wq, wk, wv), want) <= 1e-12);

  CHECK_THROWS_AS(full_residual_attention(x, wq, wk, oracle::random(rng, 3, 4)), ShapeError);
}

TEST_CASE("attend dispatches every variant") {
  SplitMix64 rng(50);
  const Matrix q = oracle::random(rng, 4, 2), k = oracle::random(rng, 4, 2), v = oracle::random(rng, 4, 2);
  const Matrix ref = softmax_attention(q, k, v).h;
  CHECK(attend(SoftmaxSpec{}, q, k, v).h == ref);
  CHECK(max_abs_diff(attend(SparseSpec{Mask(4, 4)}, q, k, v).h, ref) < 1e-12);
  CHECK(attend(BnSpec{BnMode::RecenterOnly, 0.0, 1e-5}, q, k, v).h == ref);
  CHECK(max_abs_diff(attend(Conv1DSpec{{0, 1, 0}, {}}, q, k, v).h, ref) < 1e-12);
  CHECK_FALSE(attend(LinearSpec{FeatureMapSpec::elu_plus_one(2)}, q, k, v).a.has_value());
  CHECK(variant_name(SoftmaxSpec{}) == "softmax");
  const Matrix x = oracle::random(rng, 3, 2);
  const FullResidualSpec res{Matrix::identity(2), Matrix::identity(2), Matrix(2, 2)};
  CHECK(attend(res, x, x, x).h == x);
}
