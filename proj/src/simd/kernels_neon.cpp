// SPDX-License-Identifier: Apache-2.0
// AArch64 only. Advanced SIMD is mandatory on AArch64, so no runtime probe.
#include <arm_neon.h>

#include "svrattn/simd.hpp"

namespace svrattn::simd {
namespace {

double dot_neon(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  const double* pa = a.data();
  const double* pb = b.data();
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(pa + i), vld1q_f64(pb + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(pa + i + 2), vld1q_f64(pb + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += pa[i] * pb[i];
  return acc;
}

void axpy_neon(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  const double* px = x.data();
  double* py = y.data();
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(py + i, vfmaq_f64(vld1q_f64(py + i), va, vld1q_f64(px + i)));
  for (; i < n; ++i) py[i] += alpha * px[i];
}

void scale_neon(double alpha, std::span<double> x) {
  const std::size_t n = x.size();
  double* p = x.data();
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(p + i, vmulq_f64(va, vld1q_f64(p + i)));
  for (; i < n; ++i) p[i] *= alpha;
}

double max_neon(std::span<const double> x) {
  const std::size_t n = x.size();
  const double* p = x.data();
  double m = p[0];
  std::size_t i = 0;
  if (n >= 2) {
    float64x2_t vm = vld1q_f64(p);
    for (i = 2; i + 2 <= n; i += 2) vm = vmaxq_f64(vm, vld1q_f64(p + i));
    m = vmaxvq_f64(vm);
  }
  for (; i < n; ++i) m = p[i] > m ? p[i] : m;
  return m;
}

double sum_neon(std::span<const double> x) {
  const std::size_t n = x.size();
  const double* p = x.data();
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(p + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += p[i];
  return s;
}

constexpr KernelTable kNeon{Backend::Neon, dot_neon, axpy_neon, scale_neon, max_neon, sum_neon};

}  // namespace

const KernelTable* neon_kernels() { return &kNeon; }

}  // namespace svrattn::simd
