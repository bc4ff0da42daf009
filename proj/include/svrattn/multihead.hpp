// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "svrattn/attention.hpp"
#include "svrattn/tensor.hpp"

namespace svrattn {

/// Attention rule used inside one head. BnSpec heads take their statistics
/// from the head's own (pooled) keys.
using HeadVariant = std::variant<SoftmaxSpec, BnSpec, LinearSpec>;

/// One head of a scaled-heads layer. Keys and values are projected from X
/// average-pooled by `scale`; queries always come from the unpooled X.
struct HeadParams {
  std::size_t scale = 1;
  Matrix w_q;  // D x D_x
  Matrix w_k;  // D x D_x
  Matrix w_v;  // D_v x D_x
  Matrix w_o;  // D_v x D_v
  HeadVariant variant = SoftmaxSpec{};
};

struct HeadConfig {
  std::vector<HeadParams> heads;
};

struct MultiHeadOutput {
  Matrix h;                          // N x D_v
  std::vector<Matrix> head_outputs;  // per head, N x D_v, before W_O
  std::vector<std::optional<Matrix>> head_attention;  // N x N_s, absent for linear heads
};

/// sum_s H^s (W_O^s)^T, accumulated in head order.
Matrix multi_head(std::span<const Matrix> head_outputs, std::span<const Matrix> w_o);

/// Scaled-heads attention: per head pool X, project, attend, then combine
/// with multi_head. All scales 1 gives standard multi-head attention.
Matrix scaled_head_attention(const Matrix& x, const HeadConfig& cfg);
MultiHeadOutput scaled_head_attention_detailed(const Matrix& x, const HeadConfig& cfg);

/// scaled_head_attention restricted to BN heads; throws ParameterError if
/// any head is not a BnSpec head.
Matrix bn_sh_attention(const Matrix& x, const HeadConfig& cfg);

/// Number of pooled keys for sequence length n at `scale`: ceil(n / scale).
std::size_t pooled_length(std::size_t n, std::size_t scale);

struct HeadDistance {
  double mean = 0.0;
  double std = 0.0;
  double raw_mean = 0.0;  // same pairs without the 1/sqrt(N) normalization
  double raw_std = 0.0;
  std::size_t pairs = 0;
};

/// Mean and population standard deviation of pairwise Euclidean distances
/// between flattened per-head attention matrices, divided by sqrt(N).
///
/// A head with N_s < N columns is widened to N by repeating each column
/// `scale` times, truncating to N, and renormalizing each row. Scales are
/// taken from `scales` when given, otherwise inferred as ceil(N / N_s).
HeadDistance head_distance(std::span<const Matrix> attention, std::span<const std::size_t> scales = {});

/// The widening step of head_distance, exposed for inspection.
Matrix upsample_attention_columns(const Matrix& a, std::size_t target_cols, std::size_t scale);

}  // namespace svrattn
