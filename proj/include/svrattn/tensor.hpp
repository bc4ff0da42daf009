// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace svrattn {

/// Dense row-major matrix of doubles.
///
/// Construction from data rejects NaN and infinities, so every Matrix that
/// reaches an algorithm holds finite values. All free functions below are
/// pure: they return new matrices and never modify their arguments.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix filled(std::size_t rows, std::size_t cols, double value);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  /// "RxC", used in error messages.
  std::string shape_str() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T, the shape of every score and projection computation.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& m, double alpha);

/// Numerically stable softmax of each row (the row max is subtracted first).
Matrix row_softmax(const Matrix& m);

/// Average-pools consecutive rows in windows of `scale`. The output has
/// ceil(rows / scale) rows; a short final window averages what remains.
Matrix avg_pool_seq(const Matrix& x, std::size_t scale);

/// Column means as a 1 x cols matrix.
Matrix col_mean(const Matrix& m);

/// Rows listed in `order`, in that order.
Matrix permute_rows(const Matrix& m, std::span<const std::size_t> order);

/// Column-wise concatenation [a, b, ...].
Matrix hconcat(std::span<const Matrix> parts);

double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& m);
double frobenius_norm(const Matrix& m);

/// Throws ShapeError unless the shapes match; `what` names the pair.
void require_same_shape(const Matrix& a, const Matrix& b, const std::string& what);

}  // namespace svrattn
