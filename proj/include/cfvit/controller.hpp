// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "cfvit/config.hpp"
#include "cfvit/cost.hpp"
#include "cfvit/model.hpp"
#include "cfvit/telemetry.hpp"
#include "cfvit/tensor.hpp"
#include "cfvit/weights.hpp"

namespace cfvit {

struct CoarseTrace {
  std::vector<Tensor> per_encoder_class_attention;
  GlobalAttentionState global_attention;
  Tensor final_tokens;  // [(1 + N_c) x D]
  Tensor logits;
  Tensor probs;
};

CoarseTrace coarse_stage(const Tensor& image, const ModelConfig& cfg, const ModelWeights& w,
                         OpCounter* counter = nullptr);

// True iff max(probs) >= eta. eta == 1 never exits, even when a probability
// has saturated to exactly 1.0f.
bool should_exit(const Tensor& probs, double eta);

// Top ceil(alpha * N_c) patches of the final global class attention,
// returned as ascending 1-based ids.
std::vector<std::size_t> select_informative(const CoarseTrace& trace, double alpha, const ModelConfig& cfg);

// Fresh fine-stage embedding: class token, then coarse patches in raster
// order with every selected patch expanded to its four children.
TokenSequence assemble_fine_sequence(const Tensor& image, const std::vector<std::size_t>& selected,
                                     const ModelConfig& cfg, const ModelWeights& w, OpCounter* counter = nullptr);

std::size_t argmax(const Tensor& v);

struct InferOptions {
  double eta = 0.75;
  std::optional<double> alpha;  // defaults to cfg.alpha
  bool reuse = true;            // false zeroes the reuse term
};

struct InferenceOutcome {
  cost::Stage stage = cost::Stage::Coarse;
  std::size_t predicted_class = 0;
  float confidence = 0.0f;
  Tensor coarse_probs;
  Tensor coarse_logits;
  std::optional<Tensor> fine_probs;
  std::optional<Tensor> fine_logits;
  std::optional<std::vector<std::size_t>> selected_patches;
  Tensor global_attention;  // final coarse-stage EMA
  cost::CostReport flops;
  OpCounter ops;  // instrumented tally of the same run
};

InferenceOutcome infer(const Tensor& image, const ModelConfig& cfg, const ModelWeights& w, const InferOptions& opts);

struct LossTerms {
  double ce_fine = 0.0;
  double kl_coarse_fine = 0.0;
  double ce_coarse = 0.0;

  // CE(p_f, y) + KL(p_c, p_f)
  double distillation_total() const { return ce_fine + kl_coarse_fine; }
  // CE(p_f, y) + CE(p_c, y)
  double dual_ce_total() const { return ce_fine + ce_coarse; }
};

// Cross entropy is -log p[label], with p clamped below at kLossEpsilon.
// KL uses the 0*log 0 = 0 convention on p_c.
inline constexpr double kLossEpsilon = 1e-12;
LossTerms evaluate_losses(const Tensor& coarse_probs, const Tensor& fine_probs, std::size_t label);

}  // namespace cfvit
