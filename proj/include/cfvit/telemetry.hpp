// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "cfvit/tensor.hpp"

namespace cfvit {

// Exponential moving average of class attention across encoders. Empty
// until the first update at `ema_start`, which copies the class attention
// verbatim; later updates apply value = beta*value + (1-beta)*a_k.
struct GlobalAttentionState {
  std::optional<Tensor> value;
  std::size_t last_updated_encoder = 0;

  bool ready() const { return value.has_value(); }
};

// `encoder` is 1-based. Throws Error(Config) for beta outside [0, 1] and
// Error(Dimension) if `class_attention` changes length mid-sequence.
GlobalAttentionState update_global_attention(GlobalAttentionState state, const Tensor& class_attention, float beta,
                                             std::size_t encoder, std::size_t ema_start);

// Orders image patches by descending score. Index 0 (the class entry) is
// ignored; results are 1-based patch ids. Ties go to the smaller id.
std::vector<std::size_t> rank_patches(const Tensor& global_attention);

}  // namespace cfvit
