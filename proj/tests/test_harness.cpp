// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "cfvit/harness.hpp"
#include "cfvit/kernels.hpp"
#include "cfvit/oracles.hpp"
#include "test_util.hpp"

using namespace cfvit;

TEST_CASE("parse_etas") {
  const auto grid = harness::parse_etas("0:1:0.05");
  REQUIRE(grid.size() == 21);
  CHECK(grid.front() == 0.0);
  CHECK(grid[7] == 0.35);
  CHECK(grid.back() == 1.0);
  CHECK(harness::parse_etas("0.9,0.1,0.5") == std::vector<double>{0.1, 0.5, 0.9});
  CHECK_THROWS_AS(harness::parse_etas("0:1:0"), Error);
  CHECK_THROWS_AS(harness::parse_etas("abc"), Error);
  CHECK_THROWS_AS(harness::parse_etas("1.5"), Error);
}

TEST_CASE("naive attention oracle agrees with the kernel") {
  io::SplitMix64 rng(17);
  const Tensor q = test::random_tensor({6, 8}, rng), k = test::random_tensor({6, 8}, rng),
               v = test::random_tensor({6, 8}, rng);
  const auto naive = oracle::attention(q, k, v, 2);
  const auto fast = kernels::multi_head_attention(q, k, v, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t d = 0; d < 8; ++d) CHECK(std::abs(fast.output.at(i, d) - naive.output[i][d]) <= 1e-6);
    CHECK(std::abs(fast.class_attention[i] - naive.class_attention[i]) <= 1e-6);
  }
}

TEST_CASE("sweep is monotone and independent of worker count") {
  const ModelConfig cfg = test::tiny_config();
  const ModelWeights w = io::generate_synthetic(cfg, 14);
  io::SplitMix64 rng(15);
  std::vector<harness::SweepImage> images;
  for (int i = 0; i < 12; ++i) {
    images.push_back({"im" + std::to_string(i), test::random_image(cfg, rng), static_cast<std::size_t>(i % 5)});
  }
  const auto etas = harness::parse_etas("0:1:0.1");
  const auto one = harness::run_sweep(images, cfg, w, etas, 1);
  const auto four = harness::run_sweep(images, cfg, w, etas, 4);
  CHECK(harness::sweep_csv(one) == harness::sweep_csv(four));
  REQUIRE(one.size() == etas.size());
  CHECK(one.front().exit_count == 12);
  CHECK(one.back().exit_count == 0);
  for (std::size_t i = 1; i < one.size(); ++i) {
    CHECK(one[i].exit_count <= one[i - 1].exit_count);
    CHECK(one[i].expected_flops >= one[i - 1].expected_flops);
    CHECK(one[i].exit_count + one[i].fine_count == 12);
    REQUIRE(one[i].correct_coarse.has_value());
    CHECK(*one[i].correct_coarse <= one[i].exit_count);
  }
  CHECK(harness::sweep_csv(one).rfind("# schema: cfvit.sweep.v1\n", 0) == 0);
}

TEST_CASE("infer report schema") {
  const ModelConfig cfg = test::tiny_config();
  const ModelWeights w = io::generate_synthetic(cfg, 2);
  io::SplitMix64 rng(1);
  const Tensor image = test::random_image(cfg, rng);
  const InferOptions opts{1.0, std::nullopt, true};
  const auto j = harness::infer_report(infer(image, cfg, w, opts), cfg, opts, true);
  CHECK(j["schema"] == "cfvit.infer.v1");
  CHECK(j["stage"] == "fine");
  CHECK(j["selected_patches"].size() == 8);
  CHECK(j["global_attention"].size() == 17);
  CHECK(j["flops"]["total"].get<std::uint64_t>() == j["counted_mul_adds"].get<std::uint64_t>());
  const auto c = harness::cost_report_json(ModelConfig{}, 0.5);
  CHECK(c["schema"] == "cfvit.cost.v1");
}

TEST_CASE("selftest passes and each injected fault is caught") {
  auto opts = harness::default_selftest_options();
  opts.config = test::tiny_config();
  for (const auto& r : harness::run_selftest(opts)) CHECK_MESSAGE(r.passed, r.name << ": " << r.detail);
  for (const char* name : {"attention", "token-count", "encoder-flops", "degenerate"}) {
    opts.break_check = name;
    for (const auto& r : harness::run_selftest(opts)) CHECK(r.passed == (r.name != name));
  }
  opts.break_check = "nonsense";
  CHECK_THROWS_AS(harness::run_selftest(opts), Error);
}

TEST_CASE("relative_inf_error") {
  CHECK(harness::relative_inf_error(Tensor::vector({1, 2}), Tensor::vector({1, 2})) == 0.0);
  CHECK(harness::relative_inf_error(Tensor::vector({1, 3}), Tensor::vector({1, 2})) == doctest::Approx(0.5));
}
