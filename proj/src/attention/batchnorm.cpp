// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "internal.hpp"
#include "svrattn/errors.hpp"

namespace svrattn {

NormStats bn_stats(const Matrix& k, double eps_bn) {
  if (k.rows() == 0) throw ShapeError("bn_stats: no keys");
  if (!(eps_bn > 0.0)) throw ParameterError("bn_stats: eps_bn must be positive");
  const std::size_t n = k.rows();
  const std::size_t d = k.cols();
  NormStats st;
  st.mu.assign(d, 0.0);
  st.sigma2.assign(d, 0.0);
  st.s_inv.assign(d, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < d; ++c) st.mu[c] += k(j, c);
  for (double& m : st.mu) m /= static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dev = k(j, c) - st.mu[c];
      st.sigma2[c] += dev * dev;
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    st.sigma2[c] /= static_cast<double>(n);
    st.s_inv[c] = 1.0 / std::sqrt(st.sigma2[c] + eps_bn);
  }
  return st;
}

namespace {

// (x - shift) .* mult, row by row.
Matrix shift_scale(const Matrix& x, const std::vector<double>& shift, const std::vector<double>* mult) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double centered = x(r, c) - shift[c];
      out(r, c) = mult ? centered * (*mult)[c] : centered;
    }
  }
  return out;
}

struct BnInputs {
  NormStats stats;
  std::vector<double> shift;
  Matrix q_hat;
  Matrix k_hat;
};

BnInputs normalize_inputs(const Matrix& q, const Matrix& k, const BnSpec& spec) {
  BnInputs in;
  in.stats = bn_stats(k, spec.eps_bn);
  if (spec.mode == BnMode::FullBN) {
    in.shift = in.stats.mu;
    in.q_hat = shift_scale(q, in.shift, &in.stats.s_inv);
    in.k_hat = shift_scale(k, in.shift, &in.stats.s_inv);
  } else {
    in.shift.resize(in.stats.mu.size());
    for (std::size_t c = 0; c < in.shift.size(); ++c) in.shift[c] = spec.beta * in.stats.mu[c];
    in.q_hat = shift_scale(q, in.shift, nullptr);
    in.k_hat = shift_scale(k, in.shift, nullptr);
  }
  return in;
}

}  // namespace

AttentionOutput bn_attention(const Matrix& q, const Matrix& k, const Matrix& v, const BnSpec& spec) {
  detail::check_qkv(q, k, v, "bn_attention");
  const BnInputs in = normalize_inputs(q, k, spec);
  return softmax_attention(in.q_hat, in.k_hat, v);
}

AttentionOutput bn_attention_expanded(const Matrix& q, const Matrix& k, const Matrix& v, double eps_bn) {
  detail::check_qkv(q, k, v, "bn_attention_expanded");
  const NormStats st = bn_stats(k, eps_bn);
  const double root_d = std::sqrt(static_cast<double>(q.cols()));
  Matrix s(q.rows(), k.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t j = 0; j < k.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < q.cols(); ++d) {
        // mu(d) k_j(d) is (1/N) sum_j' k_j'(d) k_j(d)
        acc += (q(i, d) * k(j, d) - st.mu[d] * k(j, d)) / (root_d * (st.sigma2[d] + eps_bn));
      }
      s(i, j) = acc;
    }
  }
  Matrix a = row_softmax(s);
  Matrix h = matmul(a, v);
  return {std::move(h), std::move(a)};
}

BnGrads bn_backward(const Matrix& q, const Matrix& k, const Matrix& v, const BnSpec& spec, const Matrix& dh) {
  detail::check_qkv(q, k, v, "bn_backward");
  detail::check_dh(dh, q.rows(), v.cols(), "bn_backward");
  const BnInputs in = normalize_inputs(q, k, spec);
  const Matrix a = row_softmax(attention_scores(in.q_hat, in.k_hat));
  const QkvGrads inner = detail::attention_core_backward(in.q_hat, in.k_hat, v, a, dh);

  const std::size_t n = k.rows();
  const std::size_t dim = k.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  BnGrads g;
  g.dv = inner.dv;
  g.dq = Matrix(q.rows(), dim);
  g.dk = Matrix(n, dim);

  // Sum of the hat-space gradients over all queries and keys, per coordinate.
  std::vector<double> total(dim, 0.0);
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t c = 0; c < dim; ++c) total[c] += inner.dq(i, c);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < dim; ++c) total[c] += inner.dk(j, c);

  if (spec.mode == BnMode::RecenterOnly) {
    // q~ = q - beta mu, k~ = k - beta mu, mu = mean_j k_j
    for (std::size_t i = 0; i < q.rows(); ++i)
      for (std::size_t c = 0; c < dim; ++c) g.dq(i, c) = inner.dq(i, c);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < dim; ++c) g.dk(j, c) = inner.dk(j, c) - spec.beta * total[c] * inv_n;
    double dbeta = 0.0;
    for (std::size_t c = 0; c < dim; ++c) dbeta -= in.stats.mu[c] * total[c];
    g.dbeta = dbeta;
    return g;
  }

  // q^ = (q - mu) s, k^ = (k - mu) s, s = (sigma2 + eps)^(-1/2).
  const auto& mu = in.stats.mu;
  const auto& s = in.stats.s_inv;
  std::vector<double> ds(dim, 0.0);
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t c = 0; c < dim; ++c) ds[c] += inner.dq(i, c) * (q(i, c) - mu[c]);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < dim; ++c) ds[c] += inner.dk(j, c) * (k(j, c) - mu[c]);

  std::vector<double> dmu(dim), dsigma2(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    dmu[c] = -total[c] * s[c];
    dsigma2[c] = -0.5 * ds[c] * s[c] * s[c] * s[c];
  }
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t c = 0; c < dim; ++c) g.dq(i, c) = inner.dq(i, c) * s[c];
  // The variance's own dependence on mu vanishes since sum_j (k_j - mu) = 0.
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < dim; ++c) {
      g.dk(j, c) = inner.dk(j, c) * s[c] + dmu[c] * inv_n + dsigma2[c] * 2.0 * (k(j, c) - mu[c]) * inv_n;
    }
  }
  return g;
}

}  // namespace svrattn
