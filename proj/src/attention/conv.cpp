// SPDX-License-Identifier: Apache-2.0
#include "internal.hpp"
#include "svrattn/errors.hpp"

namespace svrattn {

namespace {

void check_odd(std::size_t s, const char* who) {
  if (s == 0 || s % 2 == 0) {
    throw ParameterError(std::string(who) + ": kernel size " + std::to_string(s) + " must be odd");
  }
}

void check_grid(const Matrix& x, std::size_t gh, std::size_t gw, const char* who) {
  if (gh * gw != x.rows() || gh == 0) {
    throw ParameterError(std::string(who) + ": " + std::to_string(x.rows()) + " tokens do not form a " +
                         std::to_string(gh) + "x" + std::to_string(gw) + " grid");
  }
}

void check_square_kernel(const Matrix& kernel, const char* who) {
  if (kernel.rows() != kernel.cols()) {
    throw ParameterError(std::string(who) + ": kernel " + kernel.shape_str() + " is not square");
  }
  check_odd(kernel.rows(), who);
}

// Adjoint of conv1d_same with respect to x.
Matrix conv1d_same_adjoint(const Matrix& dout, std::span<const double> kernel) {
  const long s = static_cast<long>(kernel.size());
  const long r = (s - 1) / 2;
  const long n = static_cast<long>(dout.rows());
  Matrix dx(dout.rows(), dout.cols());
  for (long i = 0; i < n; ++i) {
    for (long t = 0; t < s; ++t) {
      const long src = i + t - r;
      if (src < 0 || src >= n) continue;
      for (std::size_t c = 0; c < dout.cols(); ++c) dx(src, c) += kernel[t] * dout(i, c);
    }
  }
  return dx;
}

std::vector<double> conv1d_kernel_grad(const Matrix& x, const Matrix& dout, std::size_t s) {
  const long r = (static_cast<long>(s) - 1) / 2;
  const long n = static_cast<long>(x.rows());
  std::vector<double> dw(s, 0.0);
  for (long i = 0; i < n; ++i) {
    for (long t = 0; t < static_cast<long>(s); ++t) {
      const long src = i + t - r;
      if (src < 0 || src >= n) continue;
      for (std::size_t c = 0; c < x.cols(); ++c) dw[t] += dout(i, c) * x(src, c);
    }
  }
  return dw;
}

Matrix conv2d_same_adjoint(const Matrix& dout, const Matrix& kernel, std::size_t gh, std::size_t gw) {
  const long s = static_cast<long>(kernel.rows());
  const long r = (s - 1) / 2;
  Matrix dx(dout.rows(), dout.cols());
  for (long a = 0; a < static_cast<long>(gh); ++a) {
    for (long b = 0; b < static_cast<long>(gw); ++b) {
      const std::size_t dst = static_cast<std::size_t>(a) * gw + b;
      for (long u = 0; u < s; ++u) {
        for (long w = 0; w < s; ++w) {
          const long ra = a + u - r;
          const long cb = b + w - r;
          if (ra < 0 || cb < 0 || ra >= static_cast<long>(gh) || cb >= static_cast<long>(gw)) continue;
          const std::size_t src = static_cast<std::size_t>(ra) * gw + cb;
          for (std::size_t c = 0; c < dout.cols(); ++c) dx(src, c) += kernel(u, w) * dout(dst, c);
        }
      }
    }
  }
  return dx;
}

Matrix conv2d_kernel_grad(const Matrix& x, const Matrix& dout, std::size_t s, std::size_t gh, std::size_t gw) {
  const long r = (static_cast<long>(s) - 1) / 2;
  Matrix dw(s, s);
  for (long a = 0; a < static_cast<long>(gh); ++a) {
    for (long b = 0; b < static_cast<long>(gw); ++b) {
      const std::size_t dst = static_cast<std::size_t>(a) * gw + b;
      for (long u = 0; u < static_cast<long>(s); ++u) {
        for (long w = 0; w < static_cast<long>(s); ++w) {
          const long ra = a + u - r;
          const long cb = b + w - r;
          if (ra < 0 || cb < 0 || ra >= static_cast<long>(gh) || cb >= static_cast<long>(gw)) continue;
          const std::size_t src = static_cast<std::size_t>(ra) * gw + cb;
          double acc = 0.0;
          for (std::size_t c = 0; c < x.cols(); ++c) acc += dout(dst, c) * x(src, c);
          dw(u, w) += acc;
        }
      }
    }
  }
  return dw;
}

}  // namespace

Matrix conv1d_same(const Matrix& x, std::span<const double> kernel) {
  check_odd(kernel.size(), "conv1d");
  const long s = static_cast<long>(kernel.size());
  const long r = (s - 1) / 2;
  const long n = static_cast<long>(x.rows());
  Matrix out(x.rows(), x.cols());
  for (long i = 0; i < n; ++i) {
    for (long t = 0; t < s; ++t) {
      const long src = i + t - r;
      if (src < 0 || src >= n) continue;
      for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) += kernel[t] * x(src, c);
    }
  }
  return out;
}

Matrix conv2d_same(const Matrix& x, const Matrix& kernel, std::size_t grid_h, std::size_t grid_w) {
  check_square_kernel(kernel, "conv2d");
  check_grid(x, grid_h, grid_w, "conv2d");
  const long s = static_cast<long>(kernel.rows());
  const long r = (s - 1) / 2;
  Matrix out(x.rows(), x.cols());
  for (long a = 0; a < static_cast<long>(grid_h); ++a) {
    for (long b = 0; b < static_cast<long>(grid_w); ++b) {
      const std::size_t dst = static_cast<std::size_t>(a) * grid_w + b;
      for (long u = 0; u < s; ++u) {
        for (long w = 0; w < s; ++w) {
          const long ra = a + u - r;
          const long cb = b + w - r;
          if (ra < 0 || cb < 0 || ra >= static_cast<long>(grid_h) || cb >= static_cast<long>(grid_w)) continue;
          const std::size_t src = static_cast<std::size_t>(ra) * grid_w + cb;
          for (std::size_t c = 0; c < x.cols(); ++c) out(dst, c) += kernel(u, w) * x(src, c);
        }
      }
    }
  }
  return out;
}

AttentionOutput conv1d_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Conv1DSpec& spec) {
  detail::check_qkv(q, k, v, "conv1d_attention");
  const auto& key_kernel = spec.key_kernel ? *spec.key_kernel : spec.kernel;
  if (key_kernel.size() != spec.kernel.size()) {
    throw ParameterError("conv1d_attention: query and key kernels differ in size");
  }
  return softmax_attention(conv1d_same(q, spec.kernel), conv1d_same(k, key_kernel), v);
}

AttentionOutput conv2d_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Conv2DSpec& spec) {
  detail::check_qkv(q, k, v, "conv2d_attention");
  const Matrix& key_kernel = spec.key_kernel ? *spec.key_kernel : spec.kernel;
  return softmax_attention(conv2d_same(q, spec.kernel, spec.grid_h, spec.grid_w),
                           conv2d_same(k, key_kernel, spec.grid_h, spec.grid_w), v);
}

Conv1DGrads conv1d_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Conv1DSpec& spec,
                            const Matrix& dh) {
  detail::check_qkv(q, k, v, "conv1d_backward");
  detail::check_dh(dh, q.rows(), v.cols(), "conv1d_backward");
  const auto& key_kernel = spec.key_kernel ? *spec.key_kernel : spec.kernel;
  const Matrix qc = conv1d_same(q, spec.kernel);
  const Matrix kc = conv1d_same(k, key_kernel);
  const Matrix a = row_softmax(attention_scores(qc, kc));
  const QkvGrads inner = detail::attention_core_backward(qc, kc, v, a, dh);

  Conv1DGrads g;
  g.dv = inner.dv;
  g.dq = conv1d_same_adjoint(inner.dq, spec.kernel);
  g.dk = conv1d_same_adjoint(inner.dk, key_kernel);
  g.dkernel = conv1d_kernel_grad(q, inner.dq, spec.kernel.size());
  auto dkey = conv1d_kernel_grad(k, inner.dk, key_kernel.size());
  if (spec.key_kernel) {
    g.dkey_kernel = std::move(dkey);
  } else {
    for (std::size_t t = 0; t < dkey.size(); ++t) g.dkernel[t] += dkey[t];
  }
  return g;
}

Conv2DGrads conv2d_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Conv2DSpec& spec,
                            const Matrix& dh) {
  detail::check_qkv(q, k, v, "conv2d_backward");
  detail::check_dh(dh, q.rows(), v.cols(), "conv2d_backward");
  const Matrix& key_kernel = spec.key_kernel ? *spec.key_kernel : spec.kernel;
  const Matrix qc = conv2d_same(q, spec.kernel, spec.grid_h, spec.grid_w);
  const Matrix kc = conv2d_same(k, key_kernel, spec.grid_h, spec.grid_w);
  const Matrix a = row_softmax(attention_scores(qc, kc));
  const QkvGrads inner = detail::attention_core_backward(qc, kc, v, a, dh);

  Conv2DGrads g;
  g.dv = inner.dv;
  g.dq = conv2d_same_adjoint(inner.dq, spec.kernel, spec.grid_h, spec.grid_w);
  g.dk = conv2d_same_adjoint(inner.dk, key_kernel, spec.grid_h, spec.grid_w);
  g.dkernel = conv2d_kernel_grad(q, inner.dq, spec.kernel.rows(), spec.grid_h, spec.grid_w);
  Matrix dkey = conv2d_kernel_grad(k, inner.dk, key_kernel.rows(), spec.grid_h, spec.grid_w);
  if (spec.key_kernel) {
    g.dkey_kernel = std::move(dkey);
  } else {
    g.dkernel = add(g.dkernel, dkey);
  }
  return g;
}

}  // namespace svrattn
