// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "svrattn/multihead.hpp"

namespace svrattn {

/// What the cost model needs to know about a head.
struct CostHead {
  std::size_t scale = 1;
  bool bn = false;
};

/// Extracts scale and BN-ness from each head.
std::vector<CostHead> cost_heads(const HeadConfig& cfg);

/// `count` heads at the given scales, all softmax or all BN.
std::vector<CostHead> cost_heads_for_scales(std::span<const std::size_t> scales, bool bn = false);

enum class CostMode { Inference, Training };

/// FLOP and memory counts for one attention layer.
///
/// A multiply-add counts as 2 FLOPs and softmax as 5 per score. Memory is in
/// 8-byte elements. For each head with N_s = ceil(n / scale):
///   scores      2 n N_s d
///   softmax     5 n N_s
///   aggregate   2 n N_s d_v
///   projections 2 n d_x d + 2 N_s d_x (d + d_v) + 2 n d_v^2
///   bn          2 N_s d + 2 n d          (BN heads only)
///   pooling     n d_x                    (scale > 1 only)
///   attention   n N_s
///   keys/values N_s (d + d_v)
///   activations n (d + d_v), plus n d_v for the layer output
///   parameters  d_x (2 d + d_v) + d_v^2
/// Training keeps every attention matrix for the backward pass (counted
/// twice) and adds one gradient buffer per parameter.
struct CostReport {
  std::uint64_t flops_scores = 0;
  std::uint64_t flops_softmax = 0;
  std::uint64_t flops_aggregate = 0;
  std::uint64_t flops_projections = 0;
  std::uint64_t flops_bn = 0;
  std::uint64_t flops_pooling = 0;
  std::uint64_t flops_total = 0;

  std::uint64_t mem_attn_matrix = 0;
  std::uint64_t mem_kv = 0;
  std::uint64_t mem_activations = 0;
  std::uint64_t mem_params = 0;
  std::uint64_t mem_total = 0;
};

CostReport flops_estimate(std::span<const CostHead> heads, std::size_t n, std::size_t d_x, std::size_t d,
                          std::size_t d_v, CostMode mode = CostMode::Inference);
CostReport flops_estimate(const HeadConfig& cfg, std::size_t n, std::size_t d_x, std::size_t d, std::size_t d_v,
                          CostMode mode = CostMode::Inference);

/// Which FLOP count the sweep compares.
enum class CostStage { Total, Scores };

struct RatioRow {
  std::size_t n = 0;
  std::size_t d = 0;
  double flops_ratio = 0;
  double mem_ratio = 0;  // attention-matrix memory
};

/// a / b for every (n, d) with d_x = d_v = d, n varying fastest within d.
std::vector<RatioRow> ratio_sweep(std::span<const CostHead> a, std::span<const CostHead> b,
                                  std::span<const std::size_t> n_values, std::span<const std::size_t> d_values,
                                  CostStage stage = CostStage::Total);

/// Header `n,d,flops_ratio,mem_ratio`, ratios to 6 significant digits, LF endings.
void write_ratio_csv(std::ostream& out, std::span<const RatioRow> rows);
std::string format_ratio(double r);

}  // namespace svrattn
