// SPDX-License-Identifier: Apache-2.0
#include "svrattn/cost.hpp"

#include <cstdio>
#include <string>

#include "svrattn/errors.hpp"

namespace svrattn {

std::vector<CostHead> cost_heads(const HeadConfig& cfg) {
  std::vector<CostHead> out;
  for (const auto& h : cfg.heads) out.push_back({h.scale, std::holds_alternative<BnSpec>(h.variant)});
  return out;
}

std::vector<CostHead> cost_heads_for_scales(std::span<const std::size_t> scales, bool bn) {
  std::vector<CostHead> out;
  for (std::size_t s : scales) out.push_back({s, bn});
  return out;
}

CostReport flops_estimate(std::span<const CostHead> heads, std::size_t n, std::size_t d_x, std::size_t d,
                          std::size_t d_v, CostMode mode) {
  if (heads.empty()) throw ParameterError("flops_estimate: no heads");
  if (n == 0 || d_x == 0 || d == 0 || d_v == 0) throw ParameterError("flops_estimate: dimensions must be positive");
  using u64 = std::uint64_t;
  const u64 N = n, DX = d_x, D = d, DV = d_v;
  CostReport r;
  for (const CostHead& h : heads) {
    const u64 ns = pooled_length(n, h.scale);
    r.flops_scores += 2 * N * ns * D;
    r.flops_softmax += 5 * N * ns;
    r.flops_aggregate += 2 * N * ns * DV;
    r.flops_projections += 2 * N * DX * D + 2 * ns * DX * (D + DV) + 2 * N * DV * DV;
    if (h.bn) r.flops_bn += 2 * ns * D + 2 * N * D;
    if (h.scale > 1) r.flops_pooling += N * DX;
    r.mem_attn_matrix += N * ns;
    r.mem_kv += ns * (D + DV);
    r.mem_activations += N * (D + DV);
    r.mem_params += DX * (2 * D + DV) + DV * DV;
  }
  r.mem_activations += N * DV;
  r.flops_total = r.flops_scores + r.flops_softmax + r.flops_aggregate + r.flops_projections + r.flops_bn +
                  r.flops_pooling;
  r.mem_total = r.mem_attn_matrix + r.mem_kv + r.mem_activations + r.mem_params;
  if (mode == CostMode::Training) r.mem_total += r.mem_attn_matrix + r.mem_params;
  return r;
}

CostReport flops_estimate(const HeadConfig& cfg, std::size_t n, std::size_t d_x, std::size_t d, std::size_t d_v,
                          CostMode mode) {
  const auto heads = cost_heads(cfg);
  return flops_estimate(heads, n, d_x, d, d_v, mode);
}

std::vector<RatioRow> ratio_sweep(std::span<const CostHead> a, std::span<const CostHead> b,
                                  std::span<const std::size_t> n_values, std::span<const std::size_t> d_values,
                                  CostStage stage) {
  if (n_values.empty() || d_values.empty()) throw ParameterError("ratio_sweep: empty sweep list");
  std::vector<RatioRow> rows;
  for (std::size_t d : d_values) {
    for (std::size_t n : n_values) {
      const CostReport ra = flops_estimate(a, n, d, d, d);
      const CostReport rb = flops_estimate(b, n, d, d, d);
      const auto fa = stage == CostStage::Scores ? ra.flops_scores : ra.flops_total;
      const auto fb = stage == CostStage::Scores ? rb.flops_scores : rb.flops_total;
      rows.push_back({n, d, static_cast<double>(fa) / static_cast<double>(fb),
                      static_cast<double>(ra.mem_attn_matrix) / static_cast<double>(rb.mem_attn_matrix)});
    }
  }
  return rows;
}

std::string format_ratio(double r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", r);
  return buf;
}

void write_ratio_csv(std::ostream& out, std::span<const RatioRow> rows) {
  out << "n,d,flops_ratio,mem_ratio\n";
  for (const auto& r : rows) {
    out << r.n << ',' << r.d << ',' << format_ratio(r.flops_ratio) << ',' << format_ratio(r.mem_ratio) << '\n';
  }
}

}  // namespace svrattn
