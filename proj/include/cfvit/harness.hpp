// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfvit/config.hpp"
#include "cfvit/controller.hpp"
#include "cfvit/tensor.hpp"
#include "cfvit/weights.hpp"

namespace cfvit::harness {

inline constexpr const char* kInferSchema = "cfvit.infer.v1";
inline constexpr const char* kSweepSchema = "cfvit.sweep.v1";
inline constexpr const char* kCostSchema = "cfvit.cost.v1";

nlohmann::ordered_json config_json(const ModelConfig& cfg);

nlohmann::ordered_json infer_report(const InferenceOutcome& outcome, const ModelConfig& cfg, const InferOptions& opts,
                                    bool emit_attention);

nlohmann::ordered_json cost_report_json(const ModelConfig& cfg, double exit_rate);

struct SweepImage {
  std::string name;
  Tensor image;
  std::optional<std::size_t> label;
};

struct SweepRow {
  double eta = 0.0;
  std::size_t exit_count = 0;
  std::size_t fine_count = 0;
  double expected_flops = 0.0;
  double mean_confidence_coarse = 0.0;  // over images exiting at this eta
  std::optional<std::size_t> correct_coarse;  // exited and right
  std::optional<std::size_t> correct_fine;    // reached fine stage and right
};

// Per-image results are computed once (coarse confidence, and the fine
// prediction when labels are present) and then thresholded for every eta.
// Images are processed in name order on `workers` threads; output does not
// depend on the worker count.
std::vector<SweepRow> run_sweep(std::vector<SweepImage> images, const ModelConfig& cfg, const ModelWeights& w,
                                const std::vector<double>& etas, int workers = 1);

std::string sweep_csv(const std::vector<SweepRow>& rows);

// "start:stop:step" (inclusive) or a comma list. Returned ascending, rounded
// to 1e-9 so that 0:1:0.05 yields exactly representable-as-text values.
std::vector<double> parse_etas(const std::string& spec);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelftestOptions {
  ModelConfig config;  // degenerate-equivalence model; defaults to desk_config()
  std::uint64_t seed = 7;
  std::string break_check;  // "attention", "token-count", "encoder-flops" or "degenerate"
};

SelftestOptions default_selftest_options();

// Oracle checks: naive attention vs kernel, exhaustive token counts, analytic
// vs counted mul-adds, and alpha = 1 degenerate equivalence.
std::vector<CheckResult> run_selftest(const SelftestOptions& opts);

// max|a - b| / max|b|.
double relative_inf_error(const Tensor& a, const Tensor& b);

}  // namespace cfvit::harness
