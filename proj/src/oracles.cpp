// SPDX-License-Identifier: Apache-2.0
#include "cfvit/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace cfvit::oracle {

NaiveAttention attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  const std::size_t n = q.rows();
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  NaiveAttention out{std::vector<std::vector<double>>(n, std::vector<double>(d, 0.0)), std::vector<double>(n, 0.0)};
  std::vector<double> scores(n);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < dh; ++t) s += static_cast<double>(q.at(i, h * dh + t)) * k.at(j, h * dh + t);
        scores[j] = s * scale;
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double a = scores[j] / z;
        if (i == 0) out.class_attention[j] += a / static_cast<double>(heads);
        for (std::size_t t = 0; t < dh; ++t) out.output[i][h * dh + t] += a * v.at(j, h * dh + t);
      }
    }
  }
  return out;
}

std::uint64_t fine_token_count(std::uint64_t nc, std::uint64_t num, std::uint64_t den) {
  const std::uint64_t ceil_part = (nc * num + den - 1) / den;
  const std::uint64_t floor_part = (nc * (den - num)) / den;
  return 4 * ceil_part + floor_part;
}

CountedEncoder count_encoder_matmuls(std::uint64_t tokens, std::uint64_t dim, std::uint64_t heads,
                                     std::uint64_t mlp_ratio) {
  struct Mm {
    std::uint64_t m, k, n;
  };
  const std::uint64_t dh = dim / heads;
  std::vector<Mm> sa{{tokens, dim, 3 * dim}};
  for (std::uint64_t h = 0; h < heads; ++h) {
    sa.push_back({tokens, dh, tokens});  // Q_h K_h^T
    sa.push_back({tokens, tokens, dh});  // A_h V_h
  }
  const std::vector<Mm> ffn{{tokens, dim, mlp_ratio * dim}, {tokens, mlp_ratio * dim, dim}};
  auto total = [](const std::vector<Mm>& v) {
    std::uint64_t s = 0;
    for (const auto& mm : v) s += mm.m * mm.k * mm.n;
    return s;
  };
  return {total(sa), total(ffn)};
}

double max_relative_error(std::span<const float> a, std::span<const float> b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    const double denom = std::max(std::abs(static_cast<double>(b[i])), floor);
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]) / denom);
  }
  return a.size() == b.size() ? worst : INFINITY;
}

}  // namespace cfvit::oracle
