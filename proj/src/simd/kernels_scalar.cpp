// SPDX-License-Identifier: Apache-2.0
#include "svrattn/simd.hpp"

namespace svrattn::simd {
namespace {

double dot_scalar(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, std::span<double> x) {
  for (double& v : x) v *= alpha;
}

double max_scalar(std::span<const double> x) {
  double m = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) m = x[i] > m ? x[i] : m;
  return m;
}

double sum_scalar(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v;
  return acc;
}

constexpr KernelTable kScalar{Backend::Scalar, dot_scalar, axpy_scalar,
                              scale_scalar,    max_scalar, sum_scalar};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace svrattn::simd
