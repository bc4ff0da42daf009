// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "svrattn/errors.hpp"
#include "svrattn/multihead.hpp"

using namespace svrattn;

namespace {

HeadParams random_head(SplitMix64& rng, std::size_t dx, std::size_t d, std::size_t dv, std::size_t scale,
                       HeadVariant variant = SoftmaxSpec{}) {
  return {scale, oracle::random(rng, d, dx), oracle::random(rng, d, dx), oracle::random(rng, dv, dx),
          oracle::random(rng, dv, dv), variant};
}

// Concat-then-project form: [H^1 ... H^S] [W_O^1 ... W_O^S]^T.
Matrix concat_form(const std::vector<Matrix>& heads, const std::vector<Matrix>& w_o) {
  return oracle::matmul_nt(hconcat(heads), hconcat(w_o));
}

// Pool, project, softmax per head, then the concat form.
Matrix composed(const Matrix& x, const HeadConfig& cfg) {
  std::vector<Matrix> hs, wo;
  for (const auto& h : cfg.heads) {
    const Matrix xp = avg_pool_seq(x, h.scale);
    hs.push_back(oracle::softmax_attention(oracle::matmul_nt(x, h.w_q), oracle::matmul_nt(xp, h.w_k),
                                           oracle::matmul_nt(xp, h.w_v))
                     .h);
    wo.push_back(h.w_o);
  }
  return concat_form(hs, wo);
}

}  // namespace

TEST_CASE("multi_head examples") {
  SplitMix64 rng(71);
  const Matrix h1 = oracle::random(rng, 3, 2), h2 = oracle::random(rng, 3, 2);
  const Matrix one[] = {h1}, id[] = {Matrix::identity(2)};
  CHECK(multi_head(one, id) == h1);
  const Matrix two[] = {h1, h2}, wo[] = {Matrix::identity(2), Matrix(2, 2)};
  CHECK(multi_head(two, wo) == h1);

  for (int t = 0; t < 30; ++t) {
    const std::size_t n = rng.range(1, 5), dv = rng.range(1, 4), s = rng.range(1, 4);
    std::vector<Matrix> hs, ws;
    for (std::size_t i = 0; i < s; ++i) {
      hs.push_back(oracle::random(rng, n, dv));
      ws.push_back(oracle::random(rng, dv, dv));
    }
    CHECK(max_abs_diff(multi_head(hs, ws), concat_form(hs, ws)) <= 1e-12);
  }
  const Matrix bad[] = {Matrix::identity(3)};
  CHECK_THROWS_AS(multi_head(one, bad), ShapeError);
  CHECK_THROWS_AS(multi_head(two, id), ShapeError);
}

TEST_CASE("multi_head is linear in each head") {
  SplitMix64 rng(72);
  for (int t = 0; t < 30; ++t) {
    const Matrix a = oracle::random(rng, 3, 2), b = oracle::random(rng, 3, 2), c = oracle::random(rng, 3, 2);
    const Matrix w[] = {oracle::random(rng, 2, 2), oracle::random(rng, 2, 2)};
    const double al = rng.uniform(-2, 2), be = rng.uniform(-2, 2);
    const Matrix mix[] = {add(scaled(a, al), scaled(b, be)), c};
    const Matrix pa[] = {a, c}, pb[] = {b, Matrix(3, 2)}, pc[] = {Matrix(3, 2), c};
    const Matrix want = add(add(scaled(multi_head(pa, w), al), scaled(multi_head(pb, w), be)),
                            scaled(multi_head(pc, w), 1 - al));
    CHECK(max_abs_diff(multi_head(mix, w), want) <= 1e-12);
  }
}

TEST_CASE("scaled heads") {
  SplitMix64 rng(73);
  SUBCASE("all scales one is standard multi-head attention") {
    for (int t = 0; t < 20; ++t) {
      HeadConfig cfg;
      for (int s = 0; s < 3; ++s) cfg.heads.push_back(random_head(rng, 4, 2, 3, 1));
      const Matrix x = oracle::random(rng, 5, 4);
      CHECK(max_abs_diff(scaled_head_attention(x, cfg), composed(x, cfg)) <= 1e-12);
    }
  }
  SUBCASE("constant sequence is unaffected by pooling") {
    const Matrix x = Matrix::from_rows({{0.3, -0.1}, {0.3, -0.1}});
    HeadConfig c1, c2;
    c1.heads.push_back(random_head(rng, 2, 2, 2, 1));
    c2.heads.push_back(c1.heads[0]);
    c2.heads[0].scale = 2;
    CHECK(max_abs_diff(scaled_head_attention(x, c1), scaled_head_attention(x, c2)) < 1e-15);
  }
  SUBCASE("scales 1 and 2 match the hand-built pipeline") {
    for (int t = 0; t < 20; ++t) {
      HeadConfig cfg;
      cfg.heads.push_back(random_head(rng, 3, 2, 2, 1));
      cfg.heads.push_back(random_head(rng, 3, 2, 2, 2));
      const Matrix x = oracle::random(rng, 4, 3);
      CHECK(max_abs_diff(scaled_head_attention(x, cfg), composed(x, cfg)) <= 1e-12);
    }
  }
  SUBCASE("pooled widths are ceil(N / s)") {
    for (std::size_t n = 1; n <= 9; ++n)
      for (std::size_t s = 1; s <= 5; ++s) {
        CHECK(pooled_length(n, s) == (n + s - 1) / s);
        HeadConfig cfg;
        cfg.heads.push_back(random_head(rng, 2, 2, 2, s));
        const auto out = scaled_head_attention_detailed(oracle::random(rng, n, 2), cfg);
        CHECK(out.head_attention[0]->cols() == (n + s - 1) / s);
        CHECK(out.h.rows() == n);
      }
  }
  SUBCASE("errors carry the head index") {
    HeadConfig cfg;
    cfg.heads.push_back(random_head(rng, 3, 2, 2, 1));
    cfg.heads.push_back(random_head(rng, 4, 2, 2, 1));
    try {
      (void)scaled_head_attention(oracle::random(rng, 3, 3), cfg);
      FAIL("no throw");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("head 1") != std::string::npos);
    }
  }
}

TEST_CASE("bn scaled heads") {
  SplitMix64 rng(74);
  const BnSpec rc0{BnMode::RecenterOnly, 0.0, 1e-5};
  HeadConfig plain, bn;
  for (int s = 0; s < 2; ++s) {
    plain.heads.push_back(random_head(rng, 3, 2, 2, 1));
    bn.heads.push_back(plain.heads.back());
    bn.heads.back().variant = rc0;
  }
  const Matrix x = oracle::random(rng, 4, 3);
  CHECK(max_abs_diff(bn_sh_attention(x, bn), composed(x, plain)) <= 1e-12);

  HeadConfig single;
  single.heads.push_back(random_head(rng, 3, 2, 2, 1, BnSpec{}));
  const auto& h = single.heads[0];
  const Matrix want = matmul_nt(
      bn_attention(matmul_nt(x, h.w_q), matmul_nt(x, h.w_k), matmul_nt(x, h.w_v), BnSpec{}).h, h.w_o);
  CHECK(max_abs_diff(bn_sh_attention(x, single), want) <= 1e-12);

  SUBCASE("statistics come from each head's pooled keys") {
    const BnSpec rc1{BnMode::RecenterOnly, 1.0, 1e-5};
    HeadConfig cfg;
    cfg.heads.push_back(random_head(rng, 3, 2, 2, 1, rc1));
    cfg.heads.push_back(random_head(rng, 3, 2, 2, 2, rc1));
    std::vector<Matrix> hs, wo;
    for (const auto& hd : cfg.heads) {
      const Matrix xp = avg_pool_seq(x, hd.scale);
      Matrix q = oracle::matmul_nt(x, hd.w_q), k = oracle::matmul_nt(xp, hd.w_k);
      const Matrix mu = col_mean(k);
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < q.rows(); ++i) q(i, c) -= mu(0, c);
        for (std::size_t j = 0; j < k.rows(); ++j) k(j, c) -= mu(0, c);
      }
      hs.push_back(oracle::softmax_attention(q, k, oracle::matmul_nt(xp, hd.w_v)).h);
      wo.push_back(hd.w_o);
    }
    CHECK(max_abs_diff(bn_sh_attention(x, cfg), concat_form(hs, wo)) <= 1e-10);
  }
  CHECK_THROWS_AS(bn_sh_attention(x, plain), ParameterError);
}

TEST_CASE("head distance") {
  const Matrix a = Matrix::from_rows({{0.5, 0.5}}), b = Matrix::from_rows({{1, 0}});
  const Matrix same[] = {a, a};
  const auto z = head_distance(same);
  CHECK(z.mean == 0);
  CHECK(z.std == 0);
  const Matrix pair[] = {a, b};
  const auto d = head_distance(pair);
  CHECK(d.mean == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(d.std == 0);
  CHECK(d.pairs == 1);

  // three one-hot rows are pairwise sqrt(2) apart
  const Matrix tri[] = {Matrix::from_rows({{1, 0, 0}}), Matrix::from_rows({{0, 1, 0}}),
                        Matrix::from_rows({{0, 0, 1}})};
  const auto t = head_distance(tri);
  CHECK(t.mean == doctest::Approx(std::sqrt(2.0)));
  CHECK(t.std < 1e-15);
  CHECK(t.pairs == 3);

  SplitMix64 rng(75);
  const Matrix r[] = {row_softmax(oracle::random(rng, 4, 4)), row_softmax(oracle::random(rng, 4, 4)),
                      row_softmax(oracle::random(rng, 4, 4))};
  const Matrix rr[] = {r[2], r[0], r[1]};
  CHECK(std::abs(head_distance(r).mean - head_distance(rr).mean) < 1e-12);
  CHECK(std::abs(head_distance(r).std - head_distance(rr).std) < 1e-12);
  CHECK(head_distance(r).mean > 0);
  CHECK(head_distance(r).raw_mean == doctest::Approx(head_distance(r).mean * 2));

  SUBCASE("narrow heads are widened by column repetition") {
    const Matrix narrow = Matrix::from_rows({{0.25, 0.75}, {1, 0}, {0, 1}});
    const Matrix wide = upsample_attention_columns(narrow, 3, 2);
    // [0.25 0.25 0.75] renormalized
    CHECK(wide(0, 0) == doctest::Approx(0.2));
    CHECK(wide(0, 2) == doctest::Approx(0.6));
    CHECK(wide(1, 0) == doctest::Approx(0.5));
    CHECK(wide(2, 2) == doctest::Approx(1.0));
    const Matrix full = Matrix::from_rows({{0.2, 0.2, 0.6}, {0.5, 0.5, 0}, {0, 0, 1}});
    const Matrix mixed[] = {full, narrow};
    CHECK(head_distance(mixed).mean < 1e-15);
  }
  const Matrix lone[] = {a};
  CHECK_THROWS_AS(head_distance(lone), ParameterError);
}
