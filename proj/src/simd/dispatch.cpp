// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string_view>

#include "svrattn/simd.hpp"

namespace svrattn::simd {

#if !defined(SVRATTN_HAVE_AVX2)
const KernelTable* avx2_kernels() { return nullptr; }
#endif
#if !defined(SVRATTN_HAVE_NEON)
const KernelTable* neon_kernels() { return nullptr; }
#endif

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

namespace {

const KernelTable* detect() {
  if (const char* env = std::getenv("SVRATTN_SIMD"); env && std::string_view(env) == "scalar") {
    return &scalar_kernels();
  }
  if (const KernelTable* t = avx2_kernels()) return t;
  if (const KernelTable* t = neon_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  const KernelTable* t = &scalar_kernels();
  if (b == Backend::Avx2 && avx2_kernels()) t = avx2_kernels();
  if (b == Backend::Neon && neon_kernels()) t = neon_kernels();
  slot().store(t, std::memory_order_relaxed);
}

void reset_backend() { slot().store(detect(), std::memory_order_relaxed); }

}  // namespace svrattn::simd
