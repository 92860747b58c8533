// SPDX-License-Identifier: Apache-2.0
#include "cfvit/telemetry.hpp"

#include <algorithm>
#include <numeric>

namespace cfvit {

GlobalAttentionState update_global_attention(GlobalAttentionState state, const Tensor& class_attention, float beta,
                                             std::size_t encoder, std::size_t ema_start) {
  if (!(beta >= 0.0f && beta <= 1.0f)) throw Error(ErrorKind::Config, "beta must lie in [0, 1]");
  if (encoder < 1) throw Error(ErrorKind::Config, "encoder index is 1-based");
  if (encoder < ema_start) return state;
  if (encoder == ema_start || !state.value) {
    state.value = class_attention;
    state.last_updated_encoder = encoder;
    return state;
  }
  Tensor& value = *state.value;
  if (value.size() != class_attention.size()) {
    throw Error(ErrorKind::Dimension, "class attention length changed from " + std::to_string(value.size()) + " to " +
                                          std::to_string(class_attention.size()));
  }
  const double b = beta;
  for (std::size_t i = 0; i < value.size(); ++i) {
    value[i] = static_cast<float>(b * value[i] + (1.0 - b) * class_attention[i]);
  }
  state.last_updated_encoder = encoder;
  return state;
}

std::vector<std::size_t> rank_patches(const Tensor& global_attention) {
  const std::size_t n = global_attention.size();
  std::vector<std::size_t> order(n > 0 ? n - 1 : 0);
  std::iota(order.begin(), order.end(), std::size_t{1});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return global_attention[a] > global_attention[b]; });
  return order;
}

}  // namespace cfvit
