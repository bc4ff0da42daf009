// SPDX-License-Identifier: Apache-2.0
#include "svrattn/multihead.hpp"

#include <cmath>
#include <string>

#include "svrattn/errors.hpp"
#include "svrattn/simd.hpp"

namespace svrattn {

Matrix multi_head(std::span<const Matrix> head_outputs, std::span<const Matrix> w_o) {
  if (head_outputs.empty()) throw ShapeError("multi_head: no heads");
  if (head_outputs.size() != w_o.size()) {
    throw ShapeError("multi_head: " + std::to_string(head_outputs.size()) + " head outputs but " +
                     std::to_string(w_o.size()) + " output projections");
  }
  const std::size_t n = head_outputs[0].rows();
  const std::size_t dv = head_outputs[0].cols();
  Matrix out(n, dv);
  for (std::size_t s = 0; s < head_outputs.size(); ++s) {
    if (head_outputs[s].rows() != n || head_outputs[s].cols() != dv) {
      throw ShapeError("multi_head: head " + std::to_string(s) + " output " + head_outputs[s].shape_str() +
                       " vs head 0 " + head_outputs[0].shape_str());
    }
    if (w_o[s].rows() != dv || w_o[s].cols() != dv) {
      throw ShapeError("multi_head: head " + std::to_string(s) + " w_o " + w_o[s].shape_str() + " must be " +
                       std::to_string(dv) + "x" + std::to_string(dv));
    }
    out = add(out, matmul_nt(head_outputs[s], w_o[s]));
  }
  return out;
}

std::size_t pooled_length(std::size_t n, std::size_t scale) {
  if (scale == 0) throw ParameterError("pooled_length: scale must be >= 1");
  return (n + scale - 1) / scale;
}

namespace {

AttentionOutput run_head(const HeadVariant& variant, const Matrix& q, const Matrix& k, const Matrix& v) {
  if (const auto* bn = std::get_if<BnSpec>(&variant)) return bn_attention(q, k, v, *bn);
  if (const auto* lin = std::get_if<LinearSpec>(&variant)) return {linear_attention(q, k, v, lin->fmap), {}};
  return softmax_attention(q, k, v);
}

}  // namespace

MultiHeadOutput scaled_head_attention_detailed(const Matrix& x, const HeadConfig& cfg) {
  if (cfg.heads.empty()) throw ParameterError("scaled_head_attention: no heads");
  MultiHeadOutput out;
  std::vector<Matrix> w_o;
  for (std::size_t s = 0; s < cfg.heads.size(); ++s) {
    const HeadParams& head = cfg.heads[s];
    try {
      const Matrix pooled = avg_pool_seq(x, head.scale);
      const Matrix q = matmul_nt(x, head.w_q);
      const Matrix k = matmul_nt(pooled, head.w_k);
      const Matrix v = matmul_nt(pooled, head.w_v);
      AttentionOutput ho = run_head(head.variant, q, k, v);
      out.head_outputs.push_back(std::move(ho.h));
      out.head_attention.push_back(std::move(ho.a));
    } catch (const ShapeError& e) {
      throw ShapeError("head " + std::to_string(s) + ": " + e.what());
    } catch (const ParameterError& e) {
      throw ParameterError("head " + std::to_string(s) + ": " + e.what());
    }
    w_o.push_back(head.w_o);
  }
  out.h = multi_head(out.head_outputs, w_o);
  return out;
}

Matrix scaled_head_attention(const Matrix& x, const HeadConfig& cfg) {
  return scaled_head_attention_detailed(x, cfg).h;
}

Matrix bn_sh_attention(const Matrix& x, const HeadConfig& cfg) {
  for (std::size_t s = 0; s < cfg.heads.size(); ++s) {
    if (!std::holds_alternative<BnSpec>(cfg.heads[s].variant)) {
      throw ParameterError("bn_sh_attention: head " + std::to_string(s) + " is not a BN head");
    }
  }
  return scaled_head_attention(x, cfg);
}

Matrix upsample_attention_columns(const Matrix& a, std::size_t target_cols, std::size_t scale) {
  if (scale == 0) throw ParameterError("upsample_attention_columns: scale must be >= 1");
  if (a.cols() * scale < target_cols) {
    throw ShapeError("upsample_attention_columns: " + a.shape_str() + " at scale " + std::to_string(scale) +
                     " cannot cover " + std::to_string(target_cols) + " columns");
  }
  if (a.cols() == target_cols) return a;
  const auto& kern = simd::active();
  Matrix out(a.rows(), target_cols);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t c = 0; c < target_cols; ++c) out(i, c) = a(i, c / scale);
    const double total = kern.sum(out.row(i));
    if (total > 0.0) kern.scale(1.0 / total, out.row(i));
  }
  return out;
}

HeadDistance head_distance(std::span<const Matrix> attention, std::span<const std::size_t> scales) {
  if (attention.size() < 2) throw ParameterError("head_distance: needs at least 2 heads");
  if (!scales.empty() && scales.size() != attention.size()) {
    throw ShapeError("head_distance: " + std::to_string(scales.size()) + " scales for " +
                     std::to_string(attention.size()) + " heads");
  }
  const std::size_t n = attention[0].rows();
  std::size_t width = 0;
  for (const auto& a : attention) {
    if (a.rows() != n) throw ShapeError("head_distance: heads differ in query count");
    width = std::max(width, a.cols());
  }
  if (n == 0 || width == 0) throw ShapeError("head_distance: empty attention matrix");
  // self-attention: every head is widened to N key columns
  const std::size_t target = std::max(width, n);

  std::vector<Matrix> wide;
  wide.reserve(attention.size());
  for (std::size_t s = 0; s < attention.size(); ++s) {
    const std::size_t cols = attention[s].cols();
    const std::size_t scale = !scales.empty() ? scales[s] : (target + cols - 1) / cols;
    wide.push_back(upsample_attention_columns(attention[s], target, scale));
  }

  std::vector<double> dist;
  for (std::size_t a = 0; a < wide.size(); ++a) {
    for (std::size_t b = a + 1; b < wide.size(); ++b) dist.push_back(frobenius_norm(subtract(wide[a], wide[b])));
  }
  auto moments = [](const std::vector<double>& xs, double factor, double& mean, double& sd) {
    double m = 0.0;
    for (double x : xs) m += x * factor;
    m /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x * factor - m) * (x * factor - m);
    mean = m;
    sd = std::sqrt(var / static_cast<double>(xs.size()));
  };
  HeadDistance hd;
  hd.pairs = dist.size();
  moments(dist, 1.0 / std::sqrt(static_cast<double>(n)), hd.mean, hd.std);
  moments(dist, 1.0, hd.raw_mean, hd.raw_std);
  return hd;
}

}  // namespace svrattn
