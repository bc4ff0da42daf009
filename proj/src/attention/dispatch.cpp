// SPDX-License-Identifier: Apache-2.0
#include "svrattn/attention.hpp"
#include "svrattn/errors.hpp"

namespace svrattn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Matrix row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void require_self_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (!(q == k) || !(q == v)) {
    throw ParameterError("full residual attention is self-attention: q, k and v must all be the input X");
  }
}

}  // namespace

std::string variant_name(const AttentionSpec& spec) {
  return std::visit(overloaded{
                        [](const SoftmaxSpec&) -> std::string { return "softmax"; },
                        [](const LinearSpec& s) -> std::string { return "linear[" + s.fmap.describe() + "]"; },
                        [](const SparseSpec&) -> std::string { return "sparse"; },
                        [](const BnSpec& s) -> std::string {
                          return s.mode == BnMode::FullBN ? "bn_full" : "bn_recenter";
                        },
                        [](const Conv1DSpec&) -> std::string { return "conv1d"; },
                        [](const Conv2DSpec&) -> std::string { return "conv2d"; },
                        [](const FullResidualSpec&) -> std::string { return "full_residual"; },
                    },
                    spec);
}

AttentionOutput attend(const AttentionSpec& spec, const Matrix& q, const Matrix& k, const Matrix& v) {
  return std::visit(overloaded{
                        [&](const SoftmaxSpec&) { return softmax_attention(q, k, v); },
                        [&](const LinearSpec& s) { return AttentionOutput{linear_attention(q, k, v, s.fmap), {}}; },
                        [&](const SparseSpec& s) { return sparse_attention(q, k, v, s.mask); },
                        [&](const BnSpec& s) { return bn_attention(q, k, v, s); },
                        [&](const Conv1DSpec& s) { return conv1d_attention(q, k, v, s); },
                        [&](const Conv2DSpec& s) { return conv2d_attention(q, k, v, s); },
                        [&](const FullResidualSpec& s) {
                          require_self_attention(q, k, v);
                          return full_residual_forward(q, s);
                        },
                    },
                    spec);
}

Gradients attention_backward(const AttentionSpec& spec, const Matrix& q, const Matrix& k, const Matrix& v,
                             const Matrix& dh) {
  return std::visit(
      overloaded{
          [&](const SoftmaxSpec&) {
            auto g = softmax_backward(q, k, v, dh);
            return Gradients{std::move(g.dq), std::move(g.dk), std::move(g.dv), {}};
          },
          [&](const LinearSpec& s) {
            auto g = linear_backward(q, k, v, s.fmap, dh);
            return Gradients{std::move(g.dq), std::move(g.dk), std::move(g.dv), {}};
          },
          [&](const SparseSpec& s) {
            auto g = sparse_backward(q, k, v, s.mask, dh);
            return Gradients{std::move(g.dq), std::move(g.dk), std::move(g.dv), {}};
          },
          [&](const BnSpec& s) {
            auto g = bn_backward(q, k, v, s, dh);
            Gradients out{std::move(g.dq), std::move(g.dk), std::move(g.dv), {}};
            if (s.mode == BnMode::RecenterOnly) out.params.emplace_back("beta", Matrix(1, 1, {g.dbeta}));
            return out;
          },
          [&](const Conv1DSpec& s) {
            auto g = conv1d_backward(q, k, v, s, dh);
            Gradients out{std::move(g.dq), std::move(g.dk), std::move(g.dv), {}};
            out.params.emplace_back("kernel", row_vector(g.dkernel));
            if (s.key_kernel) out.params.emplace_back("key_kernel", row_vector(g.dkey_kernel));
            return out;
          },
          [&](const Conv2DSpec& s) {
            auto g = conv2d_backward(q, k, v, s, dh);
            Gradients out{std::move(g.dq), std::move(g.dk), std::move(g.dv), {}};
            out.params.emplace_back("kernel", std::move(g.dkernel));
            if (g.dkey_kernel) out.params.emplace_back("key_kernel", std::move(*g.dkey_kernel));
            return out;
          },
          [&](const FullResidualSpec& s) {
            require_self_attention(q, k, v);
            auto g = residual_backward(q, s, dh);
            Gradients out{std::move(g.dx), Matrix{}, Matrix{}, {}};
            out.params.emplace_back("w_q", std::move(g.dw_q));
            out.params.emplace_back("w_k", std::move(g.dw_k));
            out.params.emplace_back("w_v", std::move(g.dw_v));
            return out;
          },
      },
      spec);
}

}  // namespace svrattn
