// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "svrattn/errors.hpp"
#include "svrattn/simd.hpp"
#include "svrattn/tensor.hpp"

namespace svrattn {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
  }
  const auto& k = simd::active();
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double aip = a(i, p);
      if (aip != 0.0) k.axpy(aip, b.row(p), dst);
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + a.shape_str() + " * (" + b.shape_str() + ")^T");
  }
  const auto& k = simd::active();
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = k.dot(a.row(i), b.row(j));
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: (" + a.shape_str() + ")^T * " + b.shape_str());
  }
  const auto& k = simd::active();
  Matrix out(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double api = a(p, i);
      if (api != 0.0) k.axpy(api, b.row(p), out.row(i));
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

namespace {

template <typename Op>
Matrix elementwise(const Matrix& a, const Matrix& b, const char* name, Op op) {
  require_same_shape(a, b, name);
  Matrix out(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = op(x[i], y[i]);
  return out;
}

}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, "add", [](double x, double y) { return x + y; });
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, "subtract", [](double x, double y) { return x - y; });
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, "hadamard", [](double x, double y) { return x * y; });
}

Matrix scaled(const Matrix& m, double alpha) {
  Matrix out = m;
  simd::active().scale(alpha, out.data());
  return out;
}

Matrix row_softmax(const Matrix& m) {
  if (m.empty()) throw ShapeError("row_softmax: empty matrix " + m.shape_str());
  const auto& k = simd::active();
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto src = m.row(i);
    auto dst = out.row(i);
    const double mx = k.max(src);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = std::exp(src[j] - mx);
    k.scale(1.0 / k.sum(dst), dst);
  }
  return out;
}

Matrix avg_pool_seq(const Matrix& x, std::size_t scale) {
  if (scale == 0) throw ParameterError("avg_pool_seq: scale must be >= 1");
  if (scale == 1) return x;
  const std::size_t out_rows = (x.rows() + scale - 1) / scale;
  const auto& k = simd::active();
  Matrix out(out_rows, x.cols());
  for (std::size_t i = 0; i < out_rows; ++i) {
    const std::size_t lo = i * scale;
    const std::size_t hi = std::min(lo + scale, x.rows());
    auto dst = out.row(i);
    for (std::size_t r = lo; r < hi; ++r) k.axpy(1.0, x.row(r), dst);
    k.scale(1.0 / static_cast<double>(hi - lo), dst);
  }
  return out;
}

Matrix col_mean(const Matrix& m) {
  Matrix out(1, m.cols());
  if (m.rows() == 0) return out;
  const auto& k = simd::active();
  for (std::size_t r = 0; r < m.rows(); ++r) k.axpy(1.0, m.row(r), out.row(0));
  k.scale(1.0 / static_cast<double>(m.rows()), out.row(0));
  return out;
}

Matrix permute_rows(const Matrix& m, std::span<const std::size_t> order) {
  Matrix out(order.size(), m.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= m.rows()) throw ShapeError("permute_rows: index out of range");
    std::ranges::copy(m.row(order[i]), out.row(i).begin());
  }
  return out;
}

Matrix hconcat(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("hconcat: " + parts.front().shape_str() + " vs " + p.shape_str());
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = out.row(r).begin();
    for (const auto& p : parts) dst = std::ranges::copy(p.row(r), dst).out;
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

double max_abs(const Matrix& m) {
  double r = 0.0;
  for (double v : m.data()) r = std::max(r, std::abs(v));
  return r;
}

double frobenius_norm(const Matrix& m) {
  return std::sqrt(simd::active().dot(m.data(), m.data()));
}

}  // namespace svrattn
