// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <functional>
#include <string>

#include "common.hpp"
#include "svrattn/errors.hpp"
#include "svrattn/multihead.hpp"
#include "svrattn/svr.hpp"

namespace svrattn {

namespace {

using detail::pick;
using detail::random_matrix;
using detail::Tally;
using detail::unit_rows;

std::vector<double> delta_kernel(std::size_t s) {
  std::vector<double> k(s, 0.0);
  k[s / 2] = 1.0;
  return k;
}

Matrix delta_kernel2d(std::size_t s) {
  Matrix k(s, s);
  k(s / 2, s / 2) = 1.0;
  return k;
}

HeadParams random_head(SplitMix64& rng, std::size_t dx, std::size_t d, std::size_t dv, std::size_t scale,
                       HeadVariant variant) {
  HeadParams h;
  h.scale = scale;
  h.w_q = random_matrix(rng, d, dx);
  h.w_k = random_matrix(rng, d, dx);
  h.w_v = random_matrix(rng, dv, dx);
  h.w_o = random_matrix(rng, dv, dv);
  h.variant = std::move(variant);
  return h;
}

// Pool, project, attend, combine: the scaled-heads pipeline spelled out.
Matrix compose_heads(const Matrix& x, const HeadConfig& cfg) {
  std::vector<Matrix> outs, wo;
  for (const auto& h : cfg.heads) {
    const Matrix pooled = avg_pool_seq(x, h.scale);
    const Matrix q = matmul_nt(x, h.w_q);
    const Matrix k = matmul_nt(pooled, h.w_k);
    const Matrix v = matmul_nt(pooled, h.w_v);
    if (const auto* bn = std::get_if<BnSpec>(&h.variant)) {
      // statistics of this head's pooled keys, applied by hand
      const NormStats st = bn_stats(k, bn->eps_bn);
      Matrix qh = q, kh = k;
      for (Matrix* m : {&qh, &kh}) {
        for (std::size_t r = 0; r < m->rows(); ++r) {
          for (std::size_t c = 0; c < m->cols(); ++c) {
            double& e = (*m)(r, c);
            e = bn->mode == BnMode::FullBN ? (e - st.mu[c]) * st.s_inv[c] : e - bn->beta * st.mu[c];
          }
        }
      }
      outs.push_back(matmul(row_softmax(scaled(matmul_nt(qh, kh), 1.0 / std::sqrt(double(q.cols())))), v));
    } else {
      outs.push_back(matmul(row_softmax(scaled(matmul_nt(q, k), 1.0 / std::sqrt(double(q.cols())))), v));
    }
    wo.push_back(h.w_o);
  }
  // concat form: [H^1 .. H^S] [W_O^1 .. W_O^S]^T
  return matmul_nt(hconcat(outs), hconcat(wo));
}

void run_trials(std::vector<CheckReport>& out, const std::string& name, double tol, std::uint64_t seed,
                std::uint64_t salt, std::size_t trials, const std::function<double(SplitMix64&)>& body) {
  Tally t(name, tol);
  for (std::size_t i = 0; i < trials; ++i) {
    SplitMix64 rng = SplitMix64::for_trial(seed ^ salt, i);
    double err;
    try {
      err = body(rng);
    } catch (const Error&) {
      err = INFINITY;
    }
    t.add(i, err);
  }
  out.push_back(t.done());
}

}  // namespace

std::vector<CheckReport> identity_suite(std::uint64_t seed, std::size_t trials) {
  if (trials == 0) throw ParameterError("identity_suite: trials must be >= 1");
  std::vector<CheckReport> out;

  run_trials(out, "identity/bn_full_vs_expanded", 1e-10, seed, 0x01, trials, [](SplitMix64& rng) {
    const std::size_t n = pick(rng, 1, 16), nk = pick(rng, 2, 16), d = pick(rng, 1, 8), dv = pick(rng, 1, 8);
    const Matrix q = random_matrix(rng, n, d), k = random_matrix(rng, nk, d), v = random_matrix(rng, nk, dv);
    return max_abs_diff(bn_attention(q, k, v, BnSpec{}).h, bn_attention_expanded(q, k, v, kDefaultEpsBn).h);
  });

  run_trials(out, "identity/sparse_full_mask_vs_softmax", 1e-12, seed, 0x02, trials, [](SplitMix64& rng) {
    const std::size_t n = pick(rng, 1, 8), nk = pick(rng, 1, 8), d = pick(rng, 1, 4), dv = pick(rng, 1, 4);
    const Matrix q = random_matrix(rng, n, d), k = random_matrix(rng, nk, d), v = random_matrix(rng, nk, dv);
    const AttentionOutput a = sparse_attention(q, k, v, Mask(n, nk, true));
    const AttentionOutput b = softmax_attention(q, k, v);
    return std::max(max_abs_diff(a.h, b.h), max_abs_diff(*a.a, *b.a));
  });

  // bitwise: tolerance 0
  run_trials(out, "identity/recenter_beta0_vs_softmax", 0.0, seed, 0x03, trials, [](SplitMix64& rng) {
    const std::size_t n = pick(rng, 1, 8), nk = pick(rng, 1, 8), d = pick(rng, 1, 4), dv = pick(rng, 1, 4);
    const Matrix q = random_matrix(rng, n, d), k = random_matrix(rng, nk, d), v = random_matrix(rng, nk, dv);
    const AttentionOutput a = bn_attention(q, k, v, BnSpec{BnMode::RecenterOnly, 0.0, kDefaultEpsBn});
    const AttentionOutput b = softmax_attention(q, k, v);
    return std::max(max_abs_diff(a.h, b.h), max_abs_diff(*a.a, *b.a));
  });

  run_trials(out, "identity/conv1d_delta_vs_softmax", 1e-12, seed, 0x04, trials, [](SplitMix64& rng) {
    const std::size_t n = pick(rng, 1, 8), d = pick(rng, 1, 4), dv = pick(rng, 1, 4);
    const std::size_t s = 2 * pick(rng, 0, 3) + 1;
    const Matrix q = random_matrix(rng, n, d), k = random_matrix(rng, n, d), v = random_matrix(rng, n, dv);
    const AttentionOutput a = conv1d_attention(q, k, v, Conv1DSpec{delta_kernel(s), {}});
    return max_abs_diff(a.h, softmax_attention(q, k, v).h);
  });

  run_trials(out, "identity/conv2d_delta_vs_softmax", 1e-12, seed, 0x05, trials, [](SplitMix64& rng) {
    const std::size_t gh = pick(rng, 1, 4), gw = pick(rng, 1, 4), d = pick(rng, 1, 4), dv = pick(rng, 1, 4);
    const std::size_t s = 2 * pick(rng, 0, 2) + 1, n = gh * gw;
    const Matrix q = random_matrix(rng, n, d), k = random_matrix(rng, n, d), v = random_matrix(rng, n, dv);
    const AttentionOutput a = conv2d_attention(q, k, v, Conv2DSpec{delta_kernel2d(s), {}, gh, gw});
    return max_abs_diff(a.h, softmax_attention(q, k, v).h);
  });

  run_trials(out, "identity/residual_composition", 1e-12, seed, 0x06, trials, [](SplitMix64& rng) {
    const std::size_t n = pick(rng, 1, 8), d = pick(rng, 1, 4);
    const Matrix x = random_matrix(rng, n, d);
    const Matrix wq = random_matrix(rng, d, d), wk = random_matrix(rng, d, d), wv = random_matrix(rng, d, d);
    const Matrix ref = add(softmax_attention(matmul_nt(x, wq), matmul_nt(x, wk), matmul_nt(x, wv)).h, x);
    return max_abs_diff(full_residual_attention(x, wq, wk, wv), ref);
  });

  run_trials(out, "identity/mha_sum_vs_concat", 1e-12, seed, 0x07, trials, [](SplitMix64& rng) {
    const std::size_t heads = pick(rng, 1, 4), n = pick(rng, 1, 8), dv = pick(rng, 1, 4);
    std::vector<Matrix> hs, wo;
    for (std::size_t s = 0; s < heads; ++s) {
      hs.push_back(random_matrix(rng, n, dv));
      wo.push_back(random_matrix(rng, dv, dv));
    }
    return max_abs_diff(multi_head(hs, wo), matmul_nt(hconcat(hs), hconcat(wo)));
  });

  run_trials(out, "identity/scaled_heads_scale1_vs_mha", 1e-12, seed, 0x08, trials, [](SplitMix64& rng) {
    const std::size_t heads = pick(rng, 1, 3), n = pick(rng, 1, 8), dx = pick(rng, 1, 4);
    const std::size_t d = pick(rng, 1, 4), dv = pick(rng, 1, 4);
    HeadConfig cfg;
    for (std::size_t s = 0; s < heads; ++s) cfg.heads.push_back(random_head(rng, dx, d, dv, 1, SoftmaxSpec{}));
    const Matrix x = random_matrix(rng, n, dx);
    return max_abs_diff(scaled_head_attention(x, cfg), compose_heads(x, cfg));
  });

  run_trials(out, "identity/scaled_heads_pooled_composition", 1e-12, seed, 0x09, trials, [](SplitMix64& rng) {
    const std::size_t n = pick(rng, 2, 9), dx = pick(rng, 1, 4), d = pick(rng, 1, 4), dv = pick(rng, 1, 4);
    HeadConfig cfg;
    cfg.heads.push_back(random_head(rng, dx, d, dv, 1, SoftmaxSpec{}));
    cfg.heads.push_back(random_head(rng, dx, d, dv, 2, SoftmaxSpec{}));
    cfg.heads.push_back(random_head(rng, dx, d, dv, pick(rng, 1, 4), SoftmaxSpec{}));
    const Matrix x = random_matrix(rng, n, dx);
    return max_abs_diff(scaled_head_attention(x, cfg), compose_heads(x, cfg));
  });

  run_trials(out, "identity/bn_scaled_heads_composition", 1e-10, seed, 0x0a, trials, [](SplitMix64& rng) {
    const std::size_t n = pick(rng, 4, 9), dx = pick(rng, 1, 4), d = pick(rng, 1, 4), dv = pick(rng, 1, 4);
    HeadConfig cfg;
    const BnMode mode = rng.uniform() < 0.5 ? BnMode::FullBN : BnMode::RecenterOnly;
    cfg.heads.push_back(random_head(rng, dx, d, dv, 1, BnSpec{mode, 1.0, kDefaultEpsBn}));
    cfg.heads.push_back(random_head(rng, dx, d, dv, 2, BnSpec{mode, 1.0, kDefaultEpsBn}));
    const Matrix x = random_matrix(rng, n, dx);
    return max_abs_diff(bn_sh_attention(x, cfg), compose_heads(x, cfg));
  });

  run_trials(out, "identity/linear_exp10_vs_softmax", 1e-5, seed, 0x0b, trials, [](SplitMix64& rng) {
    const std::size_t n = pick(rng, 1, 8), nk = pick(rng, 1, 8), dv = pick(rng, 1, 4);
    const Matrix q = unit_rows(random_matrix(rng, n, 2)), k = unit_rows(random_matrix(rng, nk, 2));
    const Matrix v = random_matrix(rng, nk, dv);
    return max_abs_diff(linear_attention(q, k, v, FeatureMapSpec::exp_truncated(10, 2)), softmax_attention(q, k, v).h);
  });

  // the error against softmax may only shrink as T grows; report the largest increase
  // Worst error against softmax over all instances, per degree; it must not
  // grow with T. A single instance can dip early because errors in numerator
  // and normalizer partly cancel, so the comparison is over the whole batch.
  {
    const std::size_t degrees[] = {2, 4, 6, 8, 10};
    double worst[5] = {0, 0, 0, 0, 0};
    Tally t("identity/linear_exp_monotone_in_degree", 0.0);
    for (std::size_t i = 0; i < trials; ++i) {
      SplitMix64 rng = SplitMix64::for_trial(seed ^ 0x0c, i);
      const std::size_t n = pick(rng, 1, 8), nk = pick(rng, 2, 8), d = pick(rng, 2, 3), dv = pick(rng, 1, 3);
      const Matrix q = unit_rows(random_matrix(rng, n, d)), k = unit_rows(random_matrix(rng, nk, d));
      const Matrix v = random_matrix(rng, nk, dv);
      const Matrix ref = softmax_attention(q, k, v).h;
      for (std::size_t j = 0; j < 5; ++j) {
        const Matrix h = linear_attention(q, k, v, FeatureMapSpec::exp_truncated(degrees[j], d));
        worst[j] = std::max(worst[j], max_abs_diff(h, ref));
      }
    }
    for (std::size_t j = 1; j < 5; ++j) t.add(j, std::max(worst[j] - worst[j - 1], 0.0));
    out.push_back(t.done());
  }

  run_trials(out, "identity/svr_expansion_is_softmax", 1e-5, seed, 0x0d, trials, [](SplitMix64& rng) {
    const std::size_t nk = pick(rng, 1, 8), d = pick(rng, 1, 3);
    const Matrix keys = unit_rows(random_matrix(rng, nk, d));
    const SvrProblem p = build_problem(keys, Matrix(nk, 1), FeatureMapSpec::exp_truncated(8, d), Normalizer::HSoftmax,
                                       1.0, 0.0, false);
    const Matrix x = unit_rows(random_matrix(rng, 1, d));
    const std::vector<double> w = expansion_weights(p, x.row(0));
    const Matrix ref = row_softmax(scaled(matmul_nt(x, keys), 1.0 / std::sqrt(double(d))));
    double err = 0.0;
    for (std::size_t j = 0; j < nk; ++j) err = std::max(err, std::abs(w[j] - ref(0, j)));
    return err;
  });

  run_trials(out, "identity/svr_expansion_weights_stochastic", 1e-12, seed, 0x0e, trials, [](SplitMix64& rng) {
    const std::size_t nk = pick(rng, 1, 8), d = pick(rng, 1, 3);
    const Matrix keys = unit_rows(random_matrix(rng, nk, d));
    const SvrProblem p = build_problem(keys, Matrix(nk, 1), FeatureMapSpec::exp_truncated(8, d), Normalizer::HSoftmax,
                                       1.0, 0.0, false);
    const Matrix x = unit_rows(random_matrix(rng, 1, d));
    double sum = 0.0, neg = 0.0;
    for (double w : expansion_weights(p, x.row(0))) {
      sum += w;
      neg = std::max(neg, -w);
    }
    return std::max(std::abs(sum - 1.0), neg);
  });

  return out;
}

}  // namespace svrattn
