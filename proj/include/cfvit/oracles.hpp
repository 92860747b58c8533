// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference computations used by the self-test and the test
// suites. Nothing here shares code with the kernels it checks.

#include <cstdint>
#include <span>
#include <vector>

#include "cfvit/tensor.hpp"

namespace cfvit::oracle {

struct NaiveAttention {
  std::vector<std::vector<double>> output;  // [N][D]
  std::vector<double> class_attention;      // [N]
};

// Triple-loop multi-head attention in double precision.
NaiveAttention attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

// 4*ceil(nc*num/den) + floor(nc*(den-num)/den) for alpha = num/den, in
// integer arithmetic.
std::uint64_t fine_token_count(std::uint64_t nc, std::uint64_t num, std::uint64_t den);

// sa and ffn mul-adds counted the slow way: one term per matmul of a
// single-head encoder pass over `tokens` rows.
struct CountedEncoder {
  std::uint64_t sa;
  std::uint64_t ffn;
};
CountedEncoder count_encoder_matmuls(std::uint64_t tokens, std::uint64_t dim, std::uint64_t heads,
                                     std::uint64_t mlp_ratio);

// Max relative deviation |a-b| / max(|b|, floor) over two equally sized spans.
double max_relative_error(std::span<const float> a, std::span<const float> b, double floor = 1e-6);

}  // namespace cfvit::oracle
