// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "cfvit/model.hpp"
#include "cfvit/tensor.hpp"
#include "cfvit/weights.hpp"

namespace cfvit {

// Builds the additive reuse term for a fine-stage input.
//
// Each selected coarse output token x_K^i is transformed by the reuse MLP
// (norm -> linear -> GELU -> linear) and copied to the four child slots of
// patch i in `layout`. The class row and every unsplit coarse row stay zero,
// so the result lines up row-for-row with the fine token sequence.
//
// `coarse_final_tokens` is [(1 + N_c) x D]. `selected` holds 1-based coarse
// ids and must be exactly the set of parents split in `layout`
// (Error(Consistency) otherwise).
Tensor reuse_features(const Tensor& coarse_final_tokens, std::span<const std::size_t> selected,
                      const std::vector<Slot>& layout, const ReuseWeights& rw, float norm_eps = 1e-6f,
                      OpCounter* counter = nullptr);

}  // namespace cfvit
