// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "cfvit/controller.hpp"
#include "cfvit/harness.hpp"
#include "cfvit/model.hpp"
#include "test_util.hpp"

using namespace cfvit;

TEST_CASE("config validation names the violated constraint") {
  ModelConfig cfg = test::tiny_config();
  cfg.heads = 5;
  try {
    cfg.validate();
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("divisible") != std::string::npos);
  }
  cfg = test::tiny_config();
  cfg.ema_start = cfg.depth + 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = test::tiny_config();
  cfg.alpha = 1.5f;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_NOTHROW(ModelConfig{}.validate());
  CHECK_NOTHROW(desk_config().validate());
}

TEST_CASE("default geometry") {
  const ModelConfig cfg;
  CHECK(cfg.fine_grid() == 14);
  CHECK(cfg.coarse_patches() == 49);
  CHECK(cfg.fine_patches() == 196);
  CHECK(cfg.image_px() == 224);
  CHECK(cfg.patch_dim() == 768);
  CHECK(cfg.head_dim() == 64);
}

TEST_CASE("layouts") {
  const ModelConfig cfg = test::tiny_config();
  const auto coarse = coarse_layout(cfg);
  REQUIRE(coarse.size() == 16);
  CHECK(coarse.front() == Slot::coarse(1));
  CHECK(coarse.back() == Slot::coarse(16));

  const auto fine = fine_grid_layout(cfg);
  REQUIRE(fine.size() == 64);
  // Fine raster row 0 walks TL, TR of patch 1, then TL, TR of patch 2.
  CHECK(fine[0] == Slot::fine(1, 0));
  CHECK(fine[1] == Slot::fine(1, 1));
  CHECK(fine[2] == Slot::fine(2, 0));
  CHECK(fine[8] == Slot::fine(1, 2));
  CHECK(fine[9] == Slot::fine(1, 3));

  const std::vector<std::size_t> sel{2, 5};
  const auto mixed = mixed_layout(cfg, sel);
  REQUIRE(mixed.size() == 16 + 3 * 2);
  CHECK(mixed[0] == Slot::coarse(1));
  CHECK(mixed[1] == Slot::fine(2, 0));
  CHECK(mixed[4] == Slot::fine(2, 3));
  CHECK(mixed[5] == Slot::coarse(3));

  const std::vector<std::size_t> dup{3, 3};
  CHECK_THROWS_AS(mixed_layout(cfg, dup), Error);
  const std::vector<std::size_t> out{17};
  CHECK_THROWS_AS(mixed_layout(cfg, out), Error);
  const std::vector<std::size_t> zero{0};
  CHECK_THROWS_AS(mixed_layout(cfg, zero), Error);
}

TEST_CASE("fine table rows cover the fine grid once") {
  const ModelConfig cfg = test::tiny_config();
  std::set<std::size_t> rows;
  for (const auto& s : fine_grid_layout(cfg)) rows.insert(fine_table_row(s, cfg));
  CHECK(rows.size() == 64);
  CHECK(*rows.begin() == 1);
  CHECK(*rows.rbegin() == 64);
}

TEST_CASE("coarse positions are the mean of the four child positions") {
  const ModelConfig cfg = test::tiny_config();
  const ModelWeights w = io::generate_synthetic(cfg, 4);
  const Slot s = Slot::coarse(6);
  const Tensor pos = positional_lookup(s, cfg, w);
  for (std::size_t d = 0; d < cfg.embed_dim; ++d) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 4; ++c) sum += positional_lookup(Slot::fine(6, c), cfg, w)[d];
    CHECK(pos[d] == doctest::Approx(sum / 4.0).epsilon(1e-6));
  }
}

TEST_CASE("coarse patch pixels are 2x2 average pools of the fine children") {
  const ModelConfig cfg = test::tiny_config();
  io::SplitMix64 rng(8);
  const Tensor image = test::random_image(cfg, rng);
  const auto coarse = patch_pixels(image, Slot::coarse(7), cfg);
  REQUIRE(coarse.size() == cfg.patch_dim());
  const std::size_t p = cfg.patch_px;
  // Coarse patch 7 sits at coarse row 1, col 2: pixel origin (8, 16).
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) {
        double sum = 0.0;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            sum += image[(c * cfg.image_px() + 8 + 2 * y + dy) * cfg.image_px() + 16 + 2 * x + dx];
          }
        }
        CHECK(coarse[(c * p + y) * p + x] == doctest::Approx(sum / 4.0).epsilon(1e-6));
      }
    }
  }
  const auto fine = patch_pixels(image, Slot::fine(7, 3), cfg);
  CHECK(fine[0] == image[(0 * cfg.image_px() + 8 + p) * cfg.image_px() + 16 + p]);
}

TEST_CASE("image shape is checked") {
  const ModelConfig cfg = test::tiny_config();
  CHECK_THROWS_AS(check_image(Tensor({3, 31, 32}), cfg), Error);
  CHECK_THROWS_AS(check_image(Tensor({1, 32, 32}), cfg), Error);
  CHECK_NOTHROW(check_image(Tensor({3, 32, 32}), cfg));
}

TEST_CASE("forward produces per-encoder simplex class attention") {
  const ModelConfig cfg = test::tiny_config();
  const ModelWeights w = io::generate_synthetic(cfg, 12);
  io::SplitMix64 rng(1);
  const Tensor image = test::random_image(cfg, rng);
  const auto seq = embed_patches(image, Granularity::Coarse, {}, cfg, w);
  CHECK(seq.tokens.rows() == 17);
  const auto fr = forward(seq, cfg, w);
  CHECK(fr.logits.size() == cfg.num_classes);
  REQUIRE(fr.class_attention.size() == cfg.depth);
  for (const auto& a : fr.class_attention) {
    CHECK(a.size() == 17);
    CHECK(test::on_simplex(a, 1e-6));
  }
  REQUIRE(fr.global_attention.ready());
  CHECK(test::on_simplex(*fr.global_attention.value, 1e-6));
}

TEST_CASE("degenerate equivalence on the tiny model") {
  const ModelConfig cfg = test::tiny_config();
  const ModelWeights w = io::generate_synthetic(cfg, 3);
  io::SplitMix64 rng(2);
  const Tensor image = test::random_image(cfg, rng);
  std::vector<std::size_t> all(cfg.coarse_patches());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i + 1;
  const Tensor mixed = forward(assemble_fine_sequence(image, all, cfg, w), cfg, w).logits;
  const Tensor plain = forward(embed_patches(image, Granularity::Fine, {}, cfg, w), cfg, w).logits;
  CHECK(harness::relative_inf_error(mixed, plain) <= 1e-5);
}
