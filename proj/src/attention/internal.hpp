// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "svrattn/attention.hpp"

namespace svrattn::detail {

// q.cols == k.cols, k.rows == v.rows, all nonempty.
void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v, const char* who);

double inv_sqrt_dim(const Matrix& q);

// Given A = row_softmax(S) and dA, returns dS.
Matrix softmax_rows_backward(const Matrix& a, const Matrix& da);

// Gradients of <dh, A v> with A = row_softmax(q k^T / sqrt(D) + const),
// where `a` is that A.
QkvGrads attention_core_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& a,
                                 const Matrix& dh);

void check_dh(const Matrix& dh, std::size_t rows, std::size_t cols, const char* who);

}  // namespace svrattn::detail
