// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cfvit/controller.hpp"
#include "test_util.hpp"

using namespace cfvit;

TEST_CASE("should_exit thresholds") {
  const Tensor p = Tensor::vector({0.2f, 0.8f});
  CHECK(should_exit(p, 0.0));
  CHECK(should_exit(p, 0.8));
  CHECK_FALSE(should_exit(p, 0.81));
  CHECK_FALSE(should_exit(Tensor::vector({1.0f, 0.0f}), 1.0));
  CHECK_THROWS_AS(should_exit(p, 1.5), Error);
  CHECK_THROWS_AS(should_exit(p, -0.1), Error);
}

TEST_CASE("argmax takes the first maximum") {
  CHECK(argmax(Tensor::vector({0.1f, 0.4f, 0.4f})) == 1);
  CHECK(argmax(Tensor::vector({3.0f})) == 0);
}

TEST_CASE("selection is the top ceil(alpha*N_c) of the global attention") {
  const ModelConfig cfg = test::tiny_config();
  const ModelWeights w = io::generate_synthetic(cfg, 9);
  io::SplitMix64 rng(3);
  const auto trace = coarse_stage(test::random_image(cfg, rng), cfg, w);
  const Tensor& g = *trace.global_attention.value;
  for (double alpha : {0.0, 0.1, 0.5, 1.0}) {
    const auto sel = select_informative(trace, alpha, cfg);
    CHECK(sel.size() == static_cast<std::size_t>(std::ceil(alpha * 16 - 1e-9)));
    CHECK(std::is_sorted(sel.begin(), sel.end()));
    // Every selected patch scores at least as high as every unselected one.
    float min_in = 2.0f, max_out = -1.0f;
    for (std::size_t id = 1; id <= 16; ++id) {
      const bool in = std::binary_search(sel.begin(), sel.end(), id);
      if (in) min_in = std::min(min_in, g[id]);
      else max_out = std::max(max_out, g[id]);
    }
    if (!sel.empty() && sel.size() < 16) CHECK(min_in >= max_out);
  }
}

TEST_CASE("infer stage follows eta") {
  const ModelConfig cfg = test::tiny_config();
  const ModelWeights w = io::generate_synthetic(cfg, 10);
  io::SplitMix64 rng(4);
  const Tensor image = test::random_image(cfg, rng);

  const auto coarse = infer(image, cfg, w, InferOptions{0.0, std::nullopt, true});
  CHECK(coarse.stage == cost::Stage::Coarse);
  CHECK_FALSE(coarse.fine_probs.has_value());
  CHECK(coarse.predicted_class == argmax(coarse.coarse_probs));
  CHECK(test::on_simplex(coarse.coarse_probs, 1e-6));

  const auto fine = infer(image, cfg, w, InferOptions{1.0, std::nullopt, true});
  CHECK(fine.stage == cost::Stage::Fine);
  REQUIRE(fine.fine_probs.has_value());
  REQUIRE(fine.selected_patches.has_value());
  CHECK(fine.selected_patches->size() == 8);
  CHECK(fine.predicted_class == argmax(*fine.fine_probs));
  CHECK(fine.confidence == (*fine.fine_probs)[fine.predicted_class]);
  CHECK(fine.coarse_probs == coarse.coarse_probs);
  CHECK(fine.flops.total > coarse.flops.total);

  const auto no_reuse = infer(image, cfg, w, InferOptions{1.0, std::nullopt, false});
  CHECK(no_reuse.flops.reuse_flops == 0);
  CHECK(no_reuse.flops.total + fine.flops.reuse_flops == fine.flops.total);
  CHECK_FALSE(*no_reuse.fine_logits == *fine.fine_logits);
}

TEST_CASE("loss identities") {
  const Tensor p = Tensor::vector({0.1f, 0.2f, 0.7f});
  const auto self = evaluate_losses(p, p, 2);
  CHECK(std::abs(self.kl_coarse_fine) <= 1e-15);
  CHECK(self.ce_fine == doctest::Approx(-std::log(0.7f)));

  const Tensor onehot = Tensor::vector({0.0f, 1.0f, 0.0f});
  const auto hit = evaluate_losses(onehot, onehot, 1);
  CHECK(hit.ce_fine == 0.0);
  CHECK(hit.ce_coarse == 0.0);
  CHECK(hit.kl_coarse_fine == 0.0);

  const auto miss = evaluate_losses(onehot, onehot, 0);
  CHECK(miss.ce_fine == doctest::Approx(-std::log(kLossEpsilon)));

  const Tensor q = Tensor::vector({0.5f, 0.25f, 0.25f});
  const auto t = evaluate_losses(p, q, 0);
  const double kl = 0.1 * std::log(0.1 / 0.5) + 0.2 * std::log(0.2 / 0.25) + 0.7 * std::log(0.7 / 0.25);
  CHECK(t.kl_coarse_fine == doctest::Approx(kl).epsilon(1e-6));
  CHECK(t.distillation_total() == t.ce_fine + t.kl_coarse_fine);
  CHECK(t.dual_ce_total() == t.ce_fine + t.ce_coarse);

  CHECK_THROWS_AS(evaluate_losses(p, q, 3), Error);
  CHECK_THROWS_AS(evaluate_losses(p, onehot.reshaped({3}), 7), Error);
}
