// SPDX-License-Identifier: Apache-2.0
#include "cfvit/controller.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "cfvit/kernels.hpp"
#include "cfvit/reuse.hpp"

namespace cfvit {

namespace {

Tensor probabilities(const Tensor& logits) {
  return kernels::softmax_rows(logits.reshaped({1, logits.size()})).reshaped({logits.size()});
}

void check_eta(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw Error(ErrorKind::Config, "eta must lie in [0, 1]");
}

}  // namespace

CoarseTrace coarse_stage(const Tensor& image, const ModelConfig& cfg, const ModelWeights& w, OpCounter* counter) {
  const TokenSequence seq = embed_patches(image, Granularity::Coarse, {}, cfg, w, counter);
  ForwardResult fr = forward(seq, cfg, w, counter);
  CoarseTrace trace;
  trace.per_encoder_class_attention = std::move(fr.class_attention);
  trace.global_attention = std::move(fr.global_attention);
  trace.final_tokens = std::move(fr.final_tokens);
  trace.probs = probabilities(fr.logits);
  trace.logits = std::move(fr.logits);
  return trace;
}

bool should_exit(const Tensor& probs, double eta) {
  check_eta(eta);
  if (eta >= 1.0) return false;
  const auto p = probs.data();
  return static_cast<double>(*std::max_element(p.begin(), p.end())) >= eta;
}

std::vector<std::size_t> select_informative(const CoarseTrace& trace, double alpha, const ModelConfig& cfg) {
  const std::size_t nc = cfg.coarse_patches();
  const std::size_t k = cost::selected_count(nc, alpha);
  if (k == 0) return {};
  if (!trace.global_attention.ready()) {
    throw Error(ErrorKind::Consistency, "global class attention was never initialized (ema_start > depth?)");
  }
  const Tensor& ga = *trace.global_attention.value;
  if (ga.size() != nc + 1) {
    throw Error(ErrorKind::Dimension, "global attention length " + std::to_string(ga.size()) + " != N_c + 1");
  }
  auto order = rank_patches(ga);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

TokenSequence assemble_fine_sequence(const Tensor& image, const std::vector<std::size_t>& selected,
                                     const ModelConfig& cfg, const ModelWeights& w, OpCounter* counter) {
  return embed_patches(image, Granularity::Mixed, selected, cfg, w, counter);
}

std::size_t argmax(const Tensor& v) {
  const auto d = v.data();
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

InferenceOutcome infer(const Tensor& image, const ModelConfig& cfg, const ModelWeights& w, const InferOptions& opts) {
  check_eta(opts.eta);
  const double alpha = opts.alpha.value_or(cfg.alpha);

  InferenceOutcome out;
  CoarseTrace trace = coarse_stage(image, cfg, w, &out.ops);
  out.coarse_probs = trace.probs;
  out.coarse_logits = trace.logits;
  if (trace.global_attention.ready()) out.global_attention = *trace.global_attention.value;

  if (should_exit(trace.probs, opts.eta)) {
    out.stage = cost::Stage::Coarse;
    out.predicted_class = argmax(trace.probs);
    out.confidence = trace.probs[out.predicted_class];
    out.flops = cost::report(cfg, std::nullopt);
    return out;
  }

  auto selected = select_informative(trace, alpha, cfg);
  TokenSequence fine = assemble_fine_sequence(image, selected, cfg, w, &out.ops);
  if (opts.reuse) {
    const Tensor reused = reuse_features(trace.final_tokens, selected, fine.layout, w.reuse, cfg.norm_eps, &out.ops);
    fine.tokens = kernels::add(fine.tokens, reused);
  }
  const ForwardResult fr = forward(fine, cfg, w, &out.ops);
  Tensor probs = probabilities(fr.logits);

  out.stage = cost::Stage::Fine;
  out.predicted_class = argmax(probs);
  out.confidence = probs[out.predicted_class];
  out.flops = cost::report(cfg, fine.patch_count());
  if (!opts.reuse) out.flops.total -= std::exchange(out.flops.reuse_flops, 0);
  out.fine_probs = std::move(probs);
  out.fine_logits = fr.logits;
  out.selected_patches = std::move(selected);
  return out;
}

LossTerms evaluate_losses(const Tensor& coarse_probs, const Tensor& fine_probs, std::size_t label) {
  if (coarse_probs.size() != fine_probs.size()) {
    throw Error(ErrorKind::Dimension, "coarse and fine probability vectors differ in length");
  }
  if (label >= fine_probs.size()) {
    throw Error(ErrorKind::InvalidValue, "label " + std::to_string(label) + " >= class count " +
                                             std::to_string(fine_probs.size()));
  }
  auto ce = [&](const Tensor& p) { return -std::log(std::max(static_cast<double>(p[label]), kLossEpsilon)); };
  LossTerms t;
  t.ce_fine = ce(fine_probs);
  t.ce_coarse = ce(coarse_probs);
  double kl = 0.0;
  for (std::size_t i = 0; i < coarse_probs.size(); ++i) {
    const double pc = coarse_probs[i];
    if (pc <= 0.0) continue;
    const double pf = std::max(static_cast<double>(fine_probs[i]), kLossEpsilon);
    kl += pc * (std::log(pc) - std::log(pf));
  }
  t.kl_coarse_fine = kl;
  return t;
}

}  // namespace cfvit
