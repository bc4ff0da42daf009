// SPDX-License-Identifier: Apache-2.0
#pragma once

// Vector kernels behind the dense-matrix layer. Each kernel has a portable
// scalar reference and, where the build target allows, an AVX2+FMA or NEON
// variant. The variant is chosen once at first use from the CPU's feature
// bits; SVRATTN_SIMD=scalar in the environment pins the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace svrattn::simd {

enum class Backend { Scalar, Avx2, Neon };

std::string_view backend_name(Backend b);

struct KernelTable {
  Backend backend;
  // sum_i a[i] * b[i]
  double (*dot)(std::span<const double> a, std::span<const double> b);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, std::span<const double> x, std::span<double> y);
  // x[i] *= alpha
  void (*scale)(double alpha, std::span<double> x);
  // max_i x[i]; x nonempty
  double (*max)(std::span<const double> x);
  // sum_i x[i]
  double (*sum)(std::span<const double> x);
};

const KernelTable& scalar_kernels();

// nullptr when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// Table used by every matrix operation.
const KernelTable& active();

// Pins the active table. Test hook; not safe to call while other threads
// are running matrix operations.
void set_backend(Backend b);

// Restores the automatically detected table.
void reset_backend();

}  // namespace svrattn::simd
