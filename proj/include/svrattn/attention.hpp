// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "svrattn/featuremap.hpp"
#include "svrattn/tensor.hpp"

namespace svrattn {

/// Forward and backward passes for single-head attention variants.
///
/// Conventions shared by every variant:
///   * queries q are N x D, keys k are N_s x D, values v are N_s x D_v;
///   * scores are divided by sqrt(D) with D = q.cols();
///   * the output h is N x D_v and, where the N x N_s attention matrix is
///     materialized, `a` carries it (rows are probability vectors).

struct AttentionOutput {
  Matrix h;
  std::optional<Matrix> a;
};

/// Boolean N x N_s mask; true keeps the (query, key) pair.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool value = true);
  /// Nonzero entries become true.
  static Mask from_matrix(const Matrix& m);
  /// Keys within `half_width` positions of the query index.
  static Mask band(std::size_t rows, std::size_t cols, std::size_t half_width);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits_[r * cols_ + c] = v ? 1 : 0; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Key-batch statistics: population mean, population variance, and
/// 1 / sqrt(variance + eps_bn), all per coordinate.
struct NormStats {
  std::vector<double> mu;
  std::vector<double> sigma2;
  std::vector<double> s_inv;
};

enum class BnMode { FullBN, RecenterOnly };

inline constexpr double kDefaultEpsBn = 1e-5;

struct SoftmaxSpec {};

struct LinearSpec {
  FeatureMapSpec fmap;
};

struct SparseSpec {
  Mask mask;
};

/// FullBN normalizes q and k with the key mean and scale. RecenterOnly
/// subtracts beta * mean and ignores the variance.
struct BnSpec {
  BnMode mode = BnMode::FullBN;
  double beta = 1.0;
  double eps_bn = kDefaultEpsBn;
};

/// Depthwise "same" convolution along the sequence, zero padded, stride 1:
///   out[i] = sum_t kernel[t] * x[i + t - (s-1)/2].
/// The kernel length s must be odd. `key_kernel`, if set, is used for the
/// keys instead of `kernel`.
struct Conv1DSpec {
  std::vector<double> kernel;
  std::optional<std::vector<double>> key_kernel;
};

/// Depthwise "same" 2-D convolution over an grid_h x grid_w token grid in
/// row-major token order (token r * grid_w + c sits at row r, column c).
struct Conv2DSpec {
  Matrix kernel;  // s x s, s odd
  std::optional<Matrix> key_kernel;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

/// Projections for the self-attention-with-residual form. w_q, w_k are
/// D x D_x; w_v is D_x x D_x so the residual can be added.
struct FullResidualSpec {
  Matrix w_q;
  Matrix w_k;
  Matrix w_v;
};

using AttentionSpec =
    std::variant<SoftmaxSpec, LinearSpec, SparseSpec, BnSpec, Conv1DSpec, Conv2DSpec, FullResidualSpec>;

std::string variant_name(const AttentionSpec& spec);

// ---------------------------------------------------------------- forward

/// q k^T / sqrt(D).
Matrix attention_scores(const Matrix& q, const Matrix& k);

AttentionOutput softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v);

/// Kernelized attention evaluated as Phi(q) (sum_j Phi(k_j) v_j^T) over
/// Phi(q) sum_j Phi(k_j); the N x N_s matrix is never formed. Throws
/// NumericalDomainError naming the row if a normalizer is not positive.
Matrix linear_attention(const Matrix& q, const Matrix& k, const Matrix& v, const FeatureMapSpec& fmap);

/// Masked pairs are scored kMaskedScore before the row softmax, so their
/// weight is exactly zero.
AttentionOutput sparse_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Mask& mask);
inline constexpr double kMaskedScore = -1e30;

NormStats bn_stats(const Matrix& k, double eps_bn);

AttentionOutput bn_attention(const Matrix& q, const Matrix& k, const Matrix& v, const BnSpec& spec);

/// FullBN attention with the dot product expanded and the query-only terms
/// dropped; score_ij = sum_d (q_i(d) k_j(d) - mean_j'(k_j'(d)) k_j(d)) /
/// (sqrt(D) (sigma2_d + eps)). Softmax shift invariance makes it equal to
/// bn_attention in FullBN mode.
AttentionOutput bn_attention_expanded(const Matrix& q, const Matrix& k, const Matrix& v, double eps_bn);

Matrix conv1d_same(const Matrix& x, std::span<const double> kernel);
Matrix conv2d_same(const Matrix& x, const Matrix& kernel, std::size_t grid_h, std::size_t grid_w);

AttentionOutput conv1d_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Conv1DSpec& spec);
AttentionOutput conv2d_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Conv2DSpec& spec);

/// softmax((X W_q^T)(X W_k^T)^T / sqrt(D)) (X W_v^T) + X.
Matrix full_residual_attention(const Matrix& x, const Matrix& w_q, const Matrix& w_k, const Matrix& w_v);
AttentionOutput full_residual_forward(const Matrix& x, const FullResidualSpec& spec);

/// Dispatches on the variant. For FullResidualSpec, q is the input X and
/// k, v must equal it (self-attention).
AttentionOutput attend(const AttentionSpec& spec, const Matrix& q, const Matrix& k, const Matrix& v);

// --------------------------------------------------------------- backward
//
// Each function recomputes the forward pass and returns exact reverse-mode
// gradients of <dh, h> with respect to every input and parameter.

struct QkvGrads {
  Matrix dq;
  Matrix dk;
  Matrix dv;
};

struct BnGrads {
  Matrix dq;
  Matrix dk;
  Matrix dv;
  double dbeta = 0.0;  // RecenterOnly only
};

struct Conv1DGrads {
  Matrix dq;
  Matrix dk;
  Matrix dv;
  std::vector<double> dkernel;
  std::vector<double> dkey_kernel;  // empty unless a key kernel was given
};

struct Conv2DGrads {
  Matrix dq;
  Matrix dk;
  Matrix dv;
  Matrix dkernel;
  std::optional<Matrix> dkey_kernel;
};

struct ResidualGrads {
  Matrix dx;
  Matrix dw_q;
  Matrix dw_k;
  Matrix dw_v;
};

QkvGrads softmax_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& dh);
QkvGrads sparse_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Mask& mask,
                         const Matrix& dh);
QkvGrads linear_backward(const Matrix& q, const Matrix& k, const Matrix& v, const FeatureMapSpec& fmap,
                         const Matrix& dh);
BnGrads bn_backward(const Matrix& q, const Matrix& k, const Matrix& v, const BnSpec& spec, const Matrix& dh);
Conv1DGrads conv1d_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Conv1DSpec& spec,
                            const Matrix& dh);
Conv2DGrads conv2d_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Conv2DSpec& spec,
                            const Matrix& dh);
ResidualGrads residual_backward(const Matrix& x, const FullResidualSpec& spec, const Matrix& dh);

/// Variant-agnostic gradient set. dq/dk/dv are the query/key/value
/// gradients; for FullResidualSpec dq holds dX and dk, dv are empty.
/// Variant parameters (beta, conv kernels, projections) are listed by name.
struct Gradients {
  Matrix dq;
  Matrix dk;
  Matrix dv;
  std::vector<std::pair<std::string, Matrix>> params;
};

Gradients attention_backward(const AttentionSpec& spec, const Matrix& q, const Matrix& k, const Matrix& v,
                             const Matrix& dh);

}  // namespace svrattn
