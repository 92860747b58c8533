// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

namespace cfvit {

// Shape and policy parameters. Defaults describe the DeiT-S-sized model:
// 7x7 coarse grid, 14x14 fine grid of 16px patches (224px input).
struct ModelConfig {
  std::size_t coarse_grid = 7;  // patches per side at the coarse stage
  std::size_t patch_px = 16;    // fine patch side; a coarse patch spans 2*patch_px
  std::size_t embed_dim = 384;
  std::size_t depth = 12;
  std::size_t heads = 6;
  std::size_t num_classes = 1000;
  std::size_t mlp_ratio = 4;
  std::size_t reuse_hidden = 0;  // 0 means embed_dim
  std::size_t ema_start = 4;     // 1-based encoder index where the EMA starts
  float alpha = 0.5f;            // fraction of coarse patches to split
  float beta = 0.99f;            // EMA momentum of the global class attention
  float eta = 0.75f;             // default early-exit confidence threshold
  float norm_eps = 1e-6f;

  std::size_t fine_grid() const { return 2 * coarse_grid; }
  std::size_t coarse_patches() const { return coarse_grid * coarse_grid; }
  std::size_t fine_patches() const { return fine_grid() * fine_grid(); }
  std::size_t image_px() const { return fine_grid() * patch_px; }
  std::size_t patch_dim() const { return 3 * patch_px * patch_px; }
  std::size_t mlp_hidden() const { return mlp_ratio * embed_dim; }
  std::size_t reuse_width() const { return reuse_hidden ? reuse_hidden : embed_dim; }
  std::size_t head_dim() const { return embed_dim / heads; }

  // Throws Error(Config) naming the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Small configuration used by the self-test and desk-scale experiments.
ModelConfig desk_config();

}  // namespace cfvit
