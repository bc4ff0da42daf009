// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "internal.hpp"
#include "svrattn/errors.hpp"
#include "svrattn/simd.hpp"

namespace svrattn {

namespace detail {

void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v, const char* who) {
  if (q.rows() == 0 || k.rows() == 0 || q.cols() == 0) {
    throw ShapeError(std::string(who) + ": empty operand (q " + q.shape_str() + ", k " + k.shape_str() + ")");
  }
  if (q.cols() != k.cols()) {
    throw ShapeError(std::string(who) + ": q " + q.shape_str() + " and k " + k.shape_str() +
                     " differ in feature dimension");
  }
  if (k.rows() != v.rows()) {
    throw ShapeError(std::string(who) + ": k " + k.shape_str() + " and v " + v.shape_str() +
                     " differ in row count");
  }
}

double inv_sqrt_dim(const Matrix& q) { return 1.0 / std::sqrt(static_cast<double>(q.cols())); }

void check_dh(const Matrix& dh, std::size_t rows, std::size_t cols, const char* who) {
  if (dh.rows() != rows || dh.cols() != cols) {
    throw ShapeError(std::string(who) + ": upstream gradient " + dh.shape_str() + " vs output " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix softmax_rows_backward(const Matrix& a, const Matrix& da) {
  const auto& kern = simd::active();
  Matrix ds(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double inner = kern.dot(a.row(i), da.row(i));
    for (std::size_t j = 0; j < a.cols(); ++j) ds(i, j) = a(i, j) * (da(i, j) - inner);
  }
  return ds;
}

QkvGrads attention_core_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& a,
                                 const Matrix& dh) {
  const double scale = inv_sqrt_dim(q);
  QkvGrads g;
  g.dv = matmul_tn(a, dh);
  const Matrix ds = softmax_rows_backward(a, matmul_nt(dh, v));
  g.dq = scaled(matmul(ds, k), scale);
  g.dk = scaled(matmul_tn(ds, q), scale);
  return g;
}

}  // namespace detail

Matrix attention_scores(const Matrix& q, const Matrix& k) {
  return scaled(matmul_nt(q, k), detail::inv_sqrt_dim(q));
}

AttentionOutput softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  detail::check_qkv(q, k, v, "softmax_attention");
  Matrix a = row_softmax(attention_scores(q, k));
  Matrix h = matmul(a, v);
  return {std::move(h), std::move(a)};
}

QkvGrads softmax_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& dh) {
  detail::check_qkv(q, k, v, "softmax_backward");
  detail::check_dh(dh, q.rows(), v.cols(), "softmax_backward");
  const Matrix a = row_softmax(attention_scores(q, k));
  return detail::attention_core_backward(q, k, v, a, dh);
}

// ------------------------------------------------------------------ sparse

Mask::Mask(std::size_t rows, std::size_t cols, bool value)
    : rows_(rows), cols_(cols), bits_(rows * cols, value ? 1 : 0) {}

Mask Mask::from_matrix(const Matrix& m) {
  Mask out(m.rows(), m.cols(), false);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out.set(r, c, m(r, c) != 0.0);
  return out;
}

Mask Mask::band(std::size_t rows, std::size_t cols, std::size_t half_width) {
  Mask out(rows, cols, false);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.set(r, c, (r > c ? r - c : c - r) <= half_width);
  return out;
}

namespace {

Matrix masked_weights(const Matrix& q, const Matrix& k, const Mask& mask, const char* who) {
  if (mask.rows() != q.rows() || mask.cols() != k.rows()) {
    throw ShapeError(std::string(who) + ": mask " + std::to_string(mask.rows()) + "x" +
                     std::to_string(mask.cols()) + " vs scores " + std::to_string(q.rows()) + "x" +
                     std::to_string(k.rows()));
  }
  Matrix s = attention_scores(q, k);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < s.cols(); ++j) {
      if (mask(i, j)) {
        any = true;
      } else {
        s(i, j) += kMaskedScore;
      }
    }
    if (!any) throw ParameterError(std::string(who) + ": mask row " + std::to_string(i) + " has no true entry");
  }
  return row_softmax(s);
}

}  // namespace

AttentionOutput sparse_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Mask& mask) {
  detail::check_qkv(q, k, v, "sparse_attention");
  Matrix a = masked_weights(q, k, mask, "sparse_attention");
  Matrix h = matmul(a, v);
  return {std::move(h), std::move(a)};
}

QkvGrads sparse_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Mask& mask,
                         const Matrix& dh) {
  detail::check_qkv(q, k, v, "sparse_backward");
  detail::check_dh(dh, q.rows(), v.cols(), "sparse_backward");
  const Matrix a = masked_weights(q, k, mask, "sparse_backward");
  return detail::attention_core_backward(q, k, v, a, dh);
}

}  // namespace svrattn
