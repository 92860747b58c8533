// SPDX-License-Identifier: Apache-2.0
#include "cfvit/config.hpp"

#include "cfvit/tensor.hpp"

namespace cfvit {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::Config, what);
}

bool unit_interval(float v) { return v >= 0.0f && v <= 1.0f; }

}  // namespace

void ModelConfig::validate() const {
  require(coarse_grid >= 1, "coarse_grid must be >= 1");
  require(patch_px >= 1, "patch_px must be >= 1");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(heads >= 1, "heads must be >= 1");
  require(embed_dim % heads == 0, "embed_dim (" + std::to_string(embed_dim) + ") must be divisible by heads (" +
                                      std::to_string(heads) + ")");
  require(num_classes >= 1, "num_classes must be >= 1");
  require(mlp_ratio >= 1, "mlp_ratio must be >= 1");
  require(depth >= 1, "depth must be >= 1");
  require(ema_start >= 1 && ema_start <= depth,
          "ema_start (" + std::to_string(ema_start) + ") must lie in [1, depth=" + std::to_string(depth) + "]");
  require(unit_interval(alpha), "alpha must lie in [0, 1]");
  require(unit_interval(beta), "beta must lie in [0, 1]");
  require(unit_interval(eta), "eta must lie in [0, 1]");
  require(norm_eps > 0.0f, "norm_eps must be > 0");
}

ModelConfig desk_config() {
  ModelConfig cfg;
  cfg.embed_dim = 192;
  cfg.depth = 6;
  cfg.heads = 3;
  cfg.num_classes = 10;
  return cfg;
}

}  // namespace cfvit
