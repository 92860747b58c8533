// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfvit/tensor.hpp"

namespace cfvit::kernels {

// Row-parallel (OpenMP) kernels. Every output element is reduced in a fixed
// order with a double accumulator, so results are bit-identical to the serial
// versions below regardless of thread count.

// c = a[m x k] * b[k x n]; charges m*n*k mul-adds to `counter` under `kind`.
Tensor matmul(const Tensor& a, const Tensor& b, OpCounter* counter = nullptr,
              OpKind kind = OpKind::Other);

// x[rows x in] * weight[in x out] + bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias, OpCounter* counter = nullptr,
              OpKind kind = OpKind::Other);

Tensor transpose(const Tensor& m);

// Max-subtracted softmax over the last axis. NaN input is rejected.
Tensor softmax_rows(const Tensor& m);

// Normalizes over the last axis, then applies gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps);

// GELU, tanh form:
//   0.5 * x * (1 + tanh(kGeluSqrt2OverPi * (x + kGeluCubic * x^3)))
inline constexpr double kGeluSqrt2OverPi = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluCubic = 0.044715;
Tensor gelu(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);

struct AttentionResult {
  Tensor output;           // [N x D], heads concatenated
  Tensor class_attention;  // [N], row 0 of softmax averaged over heads
};

// Multi-head scaled dot-product attention over already-projected q, k, v
// ([N x D] each, head h owns columns [h*D/H, (h+1)*D/H)). Scores are scaled
// by 1/sqrt(D/H). Charges 2*N*N*D mul-adds under OpKind::Attention.
AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                     OpCounter* counter = nullptr);

namespace serial {

// Single-threaded references for the parallel kernels above. Same reduction
// order, so outputs must match bitwise.
Tensor matmul(const Tensor& a, const Tensor& b, OpCounter* counter = nullptr, OpKind kind = OpKind::Other);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias, OpCounter* counter = nullptr,
              OpKind kind = OpKind::Other);
Tensor softmax_rows(const Tensor& m);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps);
Tensor gelu(const Tensor& x);

}  // namespace serial

// Thread-count control for the parallel kernels; no-ops without OpenMP.
void set_num_threads(int n);
int max_threads();

}  // namespace cfvit::kernels
