// SPDX-License-Identifier: Apache-2.0
#include "internal.hpp"
#include "svrattn/errors.hpp"
#include "svrattn/simd.hpp"

namespace svrattn {

namespace {

struct LinearState {
  Matrix phi_q;   // N x F
  Matrix phi_k;   // N_s x F
  Matrix kv;      // F x D_v, sum_j Phi(k_j) v_j^T
  Matrix z;       // 1 x F, sum_j Phi(k_j)
  std::vector<double> den;  // N
  Matrix h;
};

LinearState linear_forward(const Matrix& q, const Matrix& k, const Matrix& v, const FeatureMapSpec& fmap,
                           const char* who) {
  detail::check_qkv(q, k, v, who);
  if (fmap.input_dim() != q.cols()) {
    throw ShapeError(std::string(who) + ": feature map dimension " + std::to_string(fmap.input_dim()) +
                     " vs q " + q.shape_str());
  }
  const auto& kern = simd::active();
  LinearState st;
  st.phi_q = phi_rows(fmap, q);
  st.phi_k = phi_rows(fmap, k);
  st.kv = matmul_tn(st.phi_k, v);
  st.z = Matrix(1, fmap.feature_count());
  for (std::size_t j = 0; j < k.rows(); ++j) kern.axpy(1.0, st.phi_k.row(j), st.z.row(0));

  st.h = matmul(st.phi_q, st.kv);
  st.den.resize(q.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const double den = kern.dot(st.phi_q.row(i), st.z.row(0));
    if (!(den > 0.0)) {
      throw NumericalDomainError(std::string(who) + ": nonpositive normalizer " + std::to_string(den) +
                                 " at query row " + std::to_string(i));
    }
    st.den[i] = den;
    kern.scale(1.0 / den, st.h.row(i));
  }
  return st;
}

}  // namespace

Matrix linear_attention(const Matrix& q, const Matrix& k, const Matrix& v, const FeatureMapSpec& fmap) {
  return linear_forward(q, k, v, fmap, "linear_attention").h;
}

QkvGrads linear_backward(const Matrix& q, const Matrix& k, const Matrix& v, const FeatureMapSpec& fmap,
                         const Matrix& dh) {
  LinearState st = linear_forward(q, k, v, fmap, "linear_backward");
  detail::check_dh(dh, q.rows(), v.cols(), "linear_backward");
  const auto& kern = simd::active();
  const std::size_t n = q.rows();
  const std::size_t f = fmap.feature_count();

  // h_i = num_i / den_i with num_i = kv^T phi_q_i, den_i = z . phi_q_i.
  Matrix dnum(n, v.cols());
  std::vector<double> dden(n);
  for (std::size_t i = 0; i < n; ++i) {
    kern.axpy(1.0 / st.den[i], dh.row(i), dnum.row(i));
    dden[i] = -kern.dot(dh.row(i), st.h.row(i)) / st.den[i];
  }

  Matrix dphi_q = matmul_nt(dnum, st.kv);
  for (std::size_t i = 0; i < n; ++i) kern.axpy(dden[i], st.z.row(0), dphi_q.row(i));

  const Matrix dkv = matmul_tn(st.phi_q, dnum);  // F x D_v
  Matrix dz(1, f);
  for (std::size_t i = 0; i < n; ++i) kern.axpy(dden[i], st.phi_q.row(i), dz.row(0));

  QkvGrads g;
  g.dv = matmul(st.phi_k, dkv);
  Matrix dphi_k = matmul_nt(v, dkv);
  for (std::size_t j = 0; j < k.rows(); ++j) kern.axpy(1.0, dz.row(0), dphi_k.row(j));

  g.dq = Matrix(q.rows(), q.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix jac = phi_jacobian(fmap, q.row(i));
    for (std::size_t fi = 0; fi < f; ++fi) kern.axpy(dphi_q(i, fi), jac.row(fi), g.dq.row(i));
  }
  g.dk = Matrix(k.rows(), k.cols());
  for (std::size_t j = 0; j < k.rows(); ++j) {
    const Matrix jac = phi_jacobian(fmap, k.row(j));
    for (std::size_t fi = 0; fi < f; ++fi) kern.axpy(dphi_k(j, fi), jac.row(fi), g.dk.row(j));
  }
  return g;
}

}  // namespace svrattn
