// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "svrattn/tensor.hpp"

namespace svrattn {

enum class FeatureKind { ExpTruncated, EluPlusOne, Identity };

/// Explicit feature map Phi and the kernel it induces.
///
/// ExpTruncated(T, D) lists every monomial of total degree t <= T in the
/// coordinates x_i / D^(1/4), each scaled by 1/sqrt(n_1! ... n_D!), so that
/// Phi(x).Phi(y) = sum_{t<=T} (x.y / sqrt(D))^t / t!, the degree-T Taylor
/// truncation of exp(x.y / sqrt(D)).
///
/// Monomials are ordered by total degree, then lexicographically by
/// descending exponent tuple: for D = 2, t = 2 the order is
/// x1^2, x1 x2, x2^2.
///
/// EluPlusOne maps x -> elu(x) + 1 elementwise (elu with alpha = 1), giving
/// a strictly positive kernel. Identity is the plain dot product.
class FeatureMapSpec {
 public:
  static constexpr std::size_t kMaxDegree = 12;

  static FeatureMapSpec exp_truncated(std::size_t degree, std::size_t dim);
  static FeatureMapSpec elu_plus_one(std::size_t dim);
  static FeatureMapSpec identity(std::size_t dim);

  FeatureKind kind() const noexcept { return kind_; }
  std::size_t degree() const noexcept { return degree_; }
  std::size_t input_dim() const noexcept { return dim_; }
  std::size_t feature_count() const noexcept { return feature_count_; }

  /// Exponent tuples of the ExpTruncated monomials, feature_count x D,
  /// row-major. Empty for other kinds.
  std::span<const unsigned> exponents() const;

  /// Whether Phi(x).Phi(y) > 0 for all real x, y (EluPlusOne, or
  /// ExpTruncated with even degree).
  bool kernel_strictly_positive() const noexcept;

  std::string describe() const;

 private:
  struct Tables;

  FeatureMapSpec(FeatureKind kind, std::size_t degree, std::size_t dim);

  FeatureKind kind_;
  std::size_t degree_ = 0;
  std::size_t dim_ = 0;
  std::size_t feature_count_ = 0;
  std::shared_ptr<const Tables> tables_;

  friend std::vector<double> phi_apply(const FeatureMapSpec&, std::span<const double>);
  friend Matrix phi_jacobian(const FeatureMapSpec&, std::span<const double>);
};

/// Multiset coefficient sum: sum_{t=0..T} C(D + t - 1, t).
std::size_t exp_feature_count(std::size_t degree, std::size_t dim);

std::vector<double> phi_apply(const FeatureMapSpec& spec, std::span<const double> x);

/// Phi applied to every row of m.
Matrix phi_rows(const FeatureMapSpec& spec, const Matrix& m);

/// d Phi / d x as a feature_count x D matrix.
Matrix phi_jacobian(const FeatureMapSpec& spec, std::span<const double> x);

/// Phi(x) . Phi(y), computed from the explicit features.
double kernel_eval(const FeatureMapSpec& spec, std::span<const double> x, std::span<const double> y);

/// h(x) = sum_j Phi(x) . Phi(k_j) over the rows of keys.
double h_normalizer(const FeatureMapSpec& spec, std::span<const double> x, const Matrix& keys);

/// elu(z) + 1 and its derivative.
double elu_plus_one(double z);
double elu_plus_one_grad(double z);

}  // namespace svrattn
