// SPDX-License-Identifier: Apache-2.0
#include "internal.hpp"
#include "svrattn/errors.hpp"

namespace svrattn {

namespace {

void check_projections(const Matrix& x, const Matrix& w_q, const Matrix& w_k, const Matrix& w_v) {
  if (w_q.cols() != x.cols() || w_k.cols() != x.cols() || w_v.cols() != x.cols()) {
    throw ShapeError("full_residual_attention: projections w_q " + w_q.shape_str() + ", w_k " +
                     w_k.shape_str() + ", w_v " + w_v.shape_str() + " must all take x " + x.shape_str());
  }
  if (w_q.rows() != w_k.rows()) {
    throw ShapeError("full_residual_attention: w_q " + w_q.shape_str() + " and w_k " + w_k.shape_str() +
                     " must map to the same dimension");
  }
  if (w_v.rows() != x.cols()) {
    throw ShapeError("full_residual_attention: residual needs D_v == D_x but w_v is " + w_v.shape_str() +
                     " and x is " + x.shape_str());
  }
}

}  // namespace

AttentionOutput full_residual_forward(const Matrix& x, const FullResidualSpec& spec) {
  check_projections(x, spec.w_q, spec.w_k, spec.w_v);
  AttentionOutput out =
      softmax_attention(matmul_nt(x, spec.w_q), matmul_nt(x, spec.w_k), matmul_nt(x, spec.w_v));
  out.h = add(out.h, x);
  return out;
}

Matrix full_residual_attention(const Matrix& x, const Matrix& w_q, const Matrix& w_k, const Matrix& w_v) {
  return full_residual_forward(x, FullResidualSpec{w_q, w_k, w_v}).h;
}

ResidualGrads residual_backward(const Matrix& x, const FullResidualSpec& spec, const Matrix& dh) {
  check_projections(x, spec.w_q, spec.w_k, spec.w_v);
  detail::check_dh(dh, x.rows(), x.cols(), "residual_backward");
  const Matrix q = matmul_nt(x, spec.w_q);
  const Matrix k = matmul_nt(x, spec.w_k);
  const Matrix v = matmul_nt(x, spec.w_v);
  const QkvGrads inner = softmax_backward(q, k, v, dh);

  ResidualGrads g;
  g.dx = add(dh, add(matmul(inner.dq, spec.w_q), add(matmul(inner.dk, spec.w_k), matmul(inner.dv, spec.w_v))));
  g.dw_q = matmul_tn(inner.dq, x);
  g.dw_k = matmul_tn(inner.dk, x);
  g.dw_v = matmul_tn(inner.dv, x);
  return g;
}

}  // namespace svrattn
