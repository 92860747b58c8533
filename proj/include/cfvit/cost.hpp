// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>

#include "cfvit/config.hpp"

namespace cfvit::cost {

// Counting unit throughout: one multiply-accumulate. Elementwise work
// (softmax, norms, GELU) is excluded from totals and only estimated in
// CostReport::minor_ops.

// Number of coarse patches promoted to fine splitting, ceil(alpha * N_c).
// alpha is snapped to a multiple of 1e-6 first so that binary rounding of
// values such as 0.7 cannot push the product over an integer.
std::uint64_t selected_count(std::uint64_t coarse_patches, double alpha);

// Patch tokens in the fine stage: 4*ceil(N_c*alpha) + floor(N_c*(1-alpha)).
std::uint64_t fine_token_count(std::uint64_t coarse_patches, double alpha);

struct EncoderFlops {
  std::uint64_t sa = 0;   // 3*N*D^2 + 2*N^2*D  (qkv projection + QK^T + AV)
  std::uint64_t ffn = 0;  // 8*N*D^2
};

// N is the sequence length including the [class] token.
EncoderFlops encoder_flops(std::uint64_t tokens, std::uint64_t dim);

// Attention output projection, N*D^2. Not part of EncoderFlops.
std::uint64_t out_projection_flops(std::uint64_t tokens, std::uint64_t dim);

enum class Stage { Coarse, Fine };

struct StageCost {
  std::uint64_t sequence_length = 0;  // 1 + patch tokens
  std::uint64_t encoder_core = 0;     // depth * (sa + ffn)
  std::uint64_t out_projection = 0;   // depth * N * D^2
  std::uint64_t patch_embed = 0;      // patch tokens * 3p^2 * D
  std::uint64_t head = 0;             // D * n
  std::uint64_t reuse = 0;            // 2 * |S| * D * D_hidden (fine stage only)
  std::uint64_t minor_ops = 0;        // estimate of elementwise work, not in total()

  std::uint64_t encoders() const { return encoder_core + out_projection; }
  std::uint64_t total() const { return encoders() + patch_embed + head + reuse; }
};

// Fine stage requires `fine_tokens` (N_f); |S| is recovered as (N_f - N_c)/3.
StageCost stage_cost(const ModelConfig& cfg, Stage stage, std::optional<std::uint64_t> fine_tokens = std::nullopt);

std::uint64_t stage_flops(const ModelConfig& cfg, Stage stage, std::optional<std::uint64_t> fine_tokens = std::nullopt);

// Cost of a single pass over the whole fine grid (the non-adaptive backbone).
StageCost full_fine_cost(const ModelConfig& cfg);

struct CostReport {
  std::uint64_t coarse_flops = 0;      // coarse-stage encoders
  std::uint64_t fine_flops = 0;        // fine-stage encoders, 0 if exited
  std::uint64_t reuse_flops = 0;       // feature-reuse MLP
  std::uint64_t embed_head_flops = 0;  // patch embedding + head, both stages
  std::uint64_t total = 0;
  std::uint64_t encoder_core_flops = 0;  // sa + ffn portion of the encoders, both stages
  std::uint64_t minor_ops = 0;

  friend bool operator==(const CostReport&, const CostReport&) = default;
};

// Analytic report for one inference. `fine_tokens` is absent when the
// input exited at the coarse stage.
CostReport report(const ModelConfig& cfg, std::optional<std::uint64_t> fine_tokens);

// coarse_total + (1 - exit_rate) * fine_total, at alpha = cfg.alpha.
double expected_flops(const ModelConfig& cfg, double exit_rate);

}  // namespace cfvit::cost
