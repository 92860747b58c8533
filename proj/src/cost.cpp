// SPDX-License-Identifier: Apache-2.0
#include "cfvit/cost.hpp"

#include <cmath>

#include "cfvit/tensor.hpp"

namespace cfvit::cost {

namespace {

constexpr std::int64_t kAlphaScale = 1'000'000;

std::int64_t snap_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::Config, "alpha must lie in [0, 1]");
  return std::llround(alpha * static_cast<double>(kAlphaScale));
}

std::uint64_t encoder_minor_ops(const ModelConfig& cfg, std::uint64_t n) {
  const std::uint64_t d = cfg.embed_dim;
  // softmax exps + two norms + GELU + two residual adds
  return cfg.heads * n * n + 2 * n * d + n * cfg.mlp_hidden() + 2 * n * d;
}

}  // namespace

std::uint64_t selected_count(std::uint64_t coarse_patches, double alpha) {
  const auto a = static_cast<std::uint64_t>(snap_alpha(alpha));
  return (coarse_patches * a + kAlphaScale - 1) / kAlphaScale;
}

std::uint64_t fine_token_count(std::uint64_t coarse_patches, double alpha) {
  const std::uint64_t split = selected_count(coarse_patches, alpha);
  return 4 * split + (coarse_patches - split);
}

EncoderFlops encoder_flops(std::uint64_t tokens, std::uint64_t dim) {
  return {3 * tokens * dim * dim + 2 * tokens * tokens * dim, 8 * tokens * dim * dim};
}

std::uint64_t out_projection_flops(std::uint64_t tokens, std::uint64_t dim) { return tokens * dim * dim; }

namespace {

StageCost pass_cost(const ModelConfig& cfg, std::uint64_t patch_tokens) {
  StageCost c;
  const std::uint64_t d = cfg.embed_dim;
  c.sequence_length = patch_tokens + 1;
  const auto e = encoder_flops(c.sequence_length, d);
  c.encoder_core = cfg.depth * (e.sa + e.ffn);
  c.out_projection = cfg.depth * out_projection_flops(c.sequence_length, d);
  c.patch_embed = patch_tokens * cfg.patch_dim() * d;
  c.head = d * cfg.num_classes;
  c.minor_ops = cfg.depth * encoder_minor_ops(cfg, c.sequence_length) + d;
  return c;
}

}  // namespace

StageCost stage_cost(const ModelConfig& cfg, Stage stage, std::optional<std::uint64_t> fine_tokens) {
  const std::uint64_t nc = cfg.coarse_patches();
  if (stage == Stage::Coarse) return pass_cost(cfg, nc);
  if (!fine_tokens) throw Error(ErrorKind::Config, "fine stage cost requires the fine token count");
  const std::uint64_t nf = *fine_tokens;
  if (nf < nc || (nf - nc) % 3 != 0 || (nf - nc) / 3 > nc) {
    throw Error(ErrorKind::Consistency, "fine token count " + std::to_string(nf) + " is not reachable from " +
                                            std::to_string(nc) + " coarse patches");
  }
  StageCost c = pass_cost(cfg, nf);
  const std::uint64_t split = (nf - nc) / 3;
  c.reuse = 2 * split * cfg.embed_dim * cfg.reuse_width();
  c.minor_ops += split * (cfg.embed_dim + cfg.reuse_width());
  return c;
}

std::uint64_t stage_flops(const ModelConfig& cfg, Stage stage, std::optional<std::uint64_t> fine_tokens) {
  return stage_cost(cfg, stage, fine_tokens).total();
}

StageCost full_fine_cost(const ModelConfig& cfg) { return pass_cost(cfg, cfg.fine_patches()); }

CostReport report(const ModelConfig& cfg, std::optional<std::uint64_t> fine_tokens) {
  const StageCost coarse = stage_cost(cfg, Stage::Coarse);
  CostReport r;
  r.coarse_flops = coarse.encoders();
  r.embed_head_flops = coarse.patch_embed + coarse.head;
  r.encoder_core_flops = coarse.encoder_core;
  r.minor_ops = coarse.minor_ops;
  if (fine_tokens) {
    const StageCost fine = stage_cost(cfg, Stage::Fine, fine_tokens);
    r.fine_flops = fine.encoders();
    r.reuse_flops = fine.reuse;
    r.embed_head_flops += fine.patch_embed + fine.head;
    r.encoder_core_flops += fine.encoder_core;
    r.minor_ops += fine.minor_ops;
  }
  r.total = r.coarse_flops + r.fine_flops + r.reuse_flops + r.embed_head_flops;
  return r;
}

double expected_flops(const ModelConfig& cfg, double exit_rate) {
  if (!(exit_rate >= 0.0 && exit_rate <= 1.0)) throw Error(ErrorKind::Config, "exit_rate must lie in [0, 1]");
  const double coarse = static_cast<double>(stage_flops(cfg, Stage::Coarse));
  const double fine =
      static_cast<double>(stage_flops(cfg, Stage::Fine, fine_token_count(cfg.coarse_patches(), cfg.alpha)));
  return coarse + (1.0 - exit_rate) * fine;
}

}  // namespace cfvit::cost
