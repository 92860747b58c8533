// SPDX-License-Identifier: Apache-2.0
#include "cfvit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "cfvit/cost.hpp"
#include "cfvit/kernels.hpp"
#include "cfvit/model.hpp"
#include "cfvit/oracles.hpp"
#include "cfvit/weights_io.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace cfvit::harness {

using nlohmann::ordered_json;

ordered_json config_json(const ModelConfig& cfg) {
  ordered_json j;
  j["coarse_grid"] = cfg.coarse_grid;
  j["fine_grid"] = cfg.fine_grid();
  j["patch_px"] = cfg.patch_px;
  j["embed_dim"] = cfg.embed_dim;
  j["depth"] = cfg.depth;
  j["heads"] = cfg.heads;
  j["num_classes"] = cfg.num_classes;
  j["mlp_ratio"] = cfg.mlp_ratio;
  j["reuse_hidden"] = cfg.reuse_width();
  j["ema_start"] = cfg.ema_start;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["eta"] = cfg.eta;
  return j;
}

namespace {

ordered_json flops_json(const cost::CostReport& r) {
  ordered_json j;
  j["coarse"] = r.coarse_flops;
  j["fine"] = r.fine_flops;
  j["reuse"] = r.reuse_flops;
  j["embed_head"] = r.embed_head_flops;
  j["total"] = r.total;
  j["encoder_core"] = r.encoder_core_flops;
  j["minor_ops_estimate"] = r.minor_ops;
  return j;
}

ordered_json floats(const Tensor& t) {
  ordered_json a = ordered_json::array();
  for (float v : t.data()) a.push_back(v);
  return a;
}

}  // namespace

ordered_json infer_report(const InferenceOutcome& o, const ModelConfig& cfg, const InferOptions& opts,
                          bool emit_attention) {
  ordered_json j;
  j["schema"] = kInferSchema;
  j["stage"] = o.stage == cost::Stage::Coarse ? "coarse" : "fine";
  j["predicted_class"] = o.predicted_class;
  j["confidence"] = o.confidence;
  j["eta"] = opts.eta;
  j["alpha"] = opts.alpha.value_or(cfg.alpha);
  j["reuse"] = opts.reuse;
  const std::size_t coarse_pred = argmax(o.coarse_probs);
  j["coarse"] = {{"predicted_class", coarse_pred}, {"confidence", o.coarse_probs[coarse_pred]}};
  if (o.fine_probs) {
    const std::size_t fine_pred = argmax(*o.fine_probs);
    j["fine"] = {{"predicted_class", fine_pred}, {"confidence", (*o.fine_probs)[fine_pred]}};
    j["selected_patches"] = *o.selected_patches;
    j["fine_tokens"] = cfg.coarse_patches() + 3 * o.selected_patches->size();
  } else {
    j["fine"] = nullptr;
    j["selected_patches"] = nullptr;
    j["fine_tokens"] = nullptr;
  }
  j["flops"] = flops_json(o.flops);
  j["counted_mul_adds"] = o.ops.mul_adds();
  if (emit_attention) j["global_attention"] = floats(o.global_attention);
  return j;
}

ordered_json cost_report_json(const ModelConfig& cfg, double exit_rate) {
  const std::uint64_t nf = cost::fine_token_count(cfg.coarse_patches(), cfg.alpha);
  const auto coarse = cost::stage_cost(cfg, cost::Stage::Coarse);
  const auto fine = cost::stage_cost(cfg, cost::Stage::Fine, nf);
  const auto full = cost::full_fine_cost(cfg);
  auto stage = [](const cost::StageCost& s) {
    ordered_json j;
    j["sequence_length"] = s.sequence_length;
    j["encoder_core"] = s.encoder_core;
    j["out_projection"] = s.out_projection;
    j["patch_embed"] = s.patch_embed;
    j["head"] = s.head;
    j["reuse"] = s.reuse;
    j["total"] = s.total();
    j["minor_ops_estimate"] = s.minor_ops;
    return j;
  };
  ordered_json j;
  j["schema"] = kCostSchema;
  j["config"] = config_json(cfg);
  j["fine_tokens"] = nf;
  j["coarse"] = stage(coarse);
  j["fine"] = stage(fine);
  j["coarse_plus_fine"] = coarse.total() + fine.total();
  j["full_fine_single_pass"] = stage(full);
  j["exit_rate"] = exit_rate;
  j["expected_flops"] = cost::expected_flops(cfg, exit_rate);
  return j;
}

namespace {

struct ImageResult {
  float coarse_confidence = 0.0f;
  Tensor coarse_probs;
  std::size_t coarse_pred = 0;
  std::optional<std::size_t> fine_pred;
};

}  // namespace

std::vector<SweepRow> run_sweep(std::vector<SweepImage> images, const ModelConfig& cfg, const ModelWeights& w,
                                const std::vector<double>& etas, int workers) {
  if (images.empty()) throw Error(ErrorKind::Validation, "sweep needs at least one image");
  std::sort(images.begin(), images.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  const bool labelled = std::all_of(images.begin(), images.end(), [](const auto& im) { return im.label.has_value(); });

  std::vector<ImageResult> results(images.size());
  std::vector<std::string> errors(images.size());
  const auto n = static_cast<std::int64_t>(images.size());
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic) num_threads(std::max(workers, 1))
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& im = images[static_cast<std::size_t>(i)];
    try {
      // eta = 1 always runs the fine stage; only needed for correctness counts.
      const InferOptions opts{labelled ? 1.0 : 0.0, std::nullopt, true};
      const InferenceOutcome o = infer(im.image, cfg, w, opts);
      auto& r = results[static_cast<std::size_t>(i)];
      r.coarse_pred = argmax(o.coarse_probs);
      r.coarse_confidence = o.coarse_probs[r.coarse_pred];
      if (o.fine_probs) r.fine_pred = argmax(*o.fine_probs);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = im.name + ": " + e.what();
    }
  }
  (void)workers;
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(ErrorKind::Validation, e);
  }

  std::vector<double> sorted = etas;
  std::sort(sorted.begin(), sorted.end());
  std::vector<SweepRow> rows;
  for (double eta : sorted) {
    SweepRow row;
    row.eta = eta;
    double conf_sum = 0.0;
    std::size_t cc = 0, cf = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& r = results[i];
      Tensor p({1}, std::vector<float>{r.coarse_confidence});
      if (should_exit(p, eta)) {
        ++row.exit_count;
        conf_sum += r.coarse_confidence;
        if (labelled && r.coarse_pred == *images[i].label) ++cc;
      } else {
        ++row.fine_count;
        if (labelled && r.fine_pred == images[i].label) ++cf;
      }
    }
    row.mean_confidence_coarse = row.exit_count ? conf_sum / static_cast<double>(row.exit_count) : 0.0;
    row.expected_flops =
        cost::expected_flops(cfg, static_cast<double>(row.exit_count) / static_cast<double>(images.size()));
    if (labelled) {
      row.correct_coarse = cc;
      row.correct_fine = cf;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  const bool labelled = !rows.empty() && rows.front().correct_coarse.has_value();
  std::ostringstream os;
  os << "# schema: " << kSweepSchema << '\n';
  os << "eta,exit_count,fine_count,expected_flops,mean_confidence_coarse";
  if (labelled) os << ",correct_coarse,correct_fine";
  os << '\n';
  for (const auto& r : rows) {
    os << std::setprecision(6) << r.eta << ',' << r.exit_count << ',' << r.fine_count << ',' << std::fixed
       << std::setprecision(1) << r.expected_flops << std::defaultfloat << ',' << std::setprecision(9)
       << r.mean_confidence_coarse;
    if (labelled) os << ',' << *r.correct_coarse << ',' << *r.correct_fine;
    os << '\n';
  }
  return os.str();
}

std::vector<double> parse_etas(const std::string& spec) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw Error(ErrorKind::Parse, "bad eta value '" + s + "'");
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::Config, "eta " + s + " outside [0, 1]");
    return v;
  };
  auto snap = [](double v) { return std::round(v * 1e9) / 1e9; };
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw Error(ErrorKind::Parse, "eta range must be start:stop:step");
    const double start = number(parts[0]);
    const double stop = number(parts[1]);
    const double step = std::stod(parts[2]);
    if (!(step > 0.0)) throw Error(ErrorKind::Parse, "eta step must be > 0");
    for (std::size_t i = 0;; ++i) {
      const double v = snap(start + static_cast<double>(i) * step);
      if (v > stop + 1e-12) break;
      out.push_back(std::min(v, 1.0));
    }
  } else {
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
  }
  if (out.empty()) throw Error(ErrorKind::Parse, "empty eta list");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double relative_inf_error(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) return INFINITY;
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - b[i]));
    ref = std::max(ref, std::abs(static_cast<double>(b[i])));
  }
  return ref > 0.0 ? diff / ref : diff;
}

SelftestOptions default_selftest_options() { return {desk_config(), 7, ""}; }

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, io::SplitMix64& rng, float scale = 1.0f) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = scale * rng.symmetric_unit();
  return t;
}

CheckResult timed(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r{name, false, "", 0.0};
  try {
    auto [ok, detail] = body();
    r.passed = ok;
    r.detail = std::move(detail);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::pair<bool, std::string> check_attention(std::uint64_t seed, bool broken) {
  io::SplitMix64 rng(seed);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t heads = 1 + rng.next() % 4;
    const std::size_t dh = 1 + rng.next() % (16 / heads);
    const std::size_t d = heads * dh;
    const std::size_t n = 1 + rng.next() % 12;
    const Tensor q = random_tensor({n, d}, rng), k = random_tensor({n, d}, rng), v = random_tensor({n, d}, rng);
    auto kernel = kernels::multi_head_attention(q, k, v, heads);
    if (broken && inst == 0) kernel.output[0] += 1e-3f;
    const auto naive = oracle::attention(q, k, v, heads);
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(kernel.class_attention[i] - naive.class_attention[i]));
      for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, std::abs(kernel.output.at(i, j) - naive.output[i][j]));
    }
  }
  std::ostringstream os;
  os << "50 instances, max abs diff " << worst << " (limit 1e-6)";
  return {worst <= 1e-6, os.str()};
}

std::pair<bool, std::string> check_token_count(bool broken) {
  std::size_t checked = 0;
  for (std::uint64_t nc = 1; nc <= 400; ++nc) {
    for (std::uint64_t i = 0; i <= 20; ++i) {
      std::uint64_t got = cost::fine_token_count(nc, static_cast<double>(i) / 20.0);
      if (broken && nc == 49 && i == 10) ++got;
      const std::uint64_t want = oracle::fine_token_count(nc, i, 20);
      if (got != want) {
        return {false, "N_c=" + std::to_string(nc) + " alpha=" + std::to_string(i) + "/20: got " + std::to_string(got) +
                           ", expected " + std::to_string(want)};
      }
      ++checked;
    }
  }
  // Layout builder agrees with the count on square grids.
  for (std::size_t g = 1; g <= 20; ++g) {
    ModelConfig cfg;
    cfg.coarse_grid = g;
    for (std::uint64_t i = 0; i <= 20; ++i) {
      const double alpha = static_cast<double>(i) / 20.0;
      const std::size_t k = cost::selected_count(g * g, alpha);
      std::vector<std::size_t> sel(k);
      for (std::size_t s = 0; s < k; ++s) sel[s] = s + 1;
      if (mixed_layout(cfg, sel).size() != cost::fine_token_count(g * g, alpha)) {
        return {false, "layout size disagrees at grid " + std::to_string(g)};
      }
    }
  }
  return {true, std::to_string(checked) + " (N_c, alpha) pairs; 49->124, 81->204 included"};
}

std::pair<bool, std::string> check_encoder_flops(std::uint64_t seed, bool broken) {
  const std::pair<std::size_t, std::size_t> cases[] = {{5, 8}, {10, 16}, {50, 64}};
  std::ostringstream os;
  bool ok = true;
  for (auto [n, d] : cases) {
    ModelConfig cfg;
    cfg.embed_dim = d;
    cfg.heads = 2;
    cfg.depth = 1;
    cfg.ema_start = 1;
    cfg.num_classes = 3;
    cfg.patch_px = 2;
    cfg.coarse_grid = 1;
    const ModelWeights w = io::generate_synthetic(cfg, seed);
    io::SplitMix64 rng(seed ^ n);
    const Tensor x = random_tensor({n, d}, rng);
    OpCounter counter;
    encoder_forward(x, w.encoders[0], cfg, &counter);
    const auto e = cost::encoder_flops(n, d);
    std::uint64_t counted = counter.encoder_core();
    if (broken) ++counted;
    const bool match = counted == e.sa + e.ffn && counter.mul_adds(OpKind::Ffn) == e.ffn;
    ok = ok && match;
    os << "(N=" << n << ",D=" << d << ") analytic " << e.sa + e.ffn << " counted " << counted << "; ";
  }
  return {ok, os.str()};
}

std::pair<bool, std::string> check_degenerate(const SelftestOptions& opts, bool broken) {
  const ModelConfig& cfg = opts.config;
  const ModelWeights w = io::generate_synthetic(cfg, opts.seed);
  io::SplitMix64 rng(opts.seed + 1);
  const Tensor image = random_tensor({3, cfg.image_px(), cfg.image_px()}, rng);
  const InferenceOutcome o = infer(image, cfg, w, InferOptions{1.0, 1.0, false});
  const TokenSequence plain = embed_patches(image, Granularity::Fine, {}, cfg, w);
  Tensor reference = forward(plain, cfg, w).logits;
  if (broken) reference[0] += 1.0f;
  const double err = relative_inf_error(*o.fine_logits, reference);
  std::ostringstream os;
  os << "relative logit error " << err << " (limit 1e-5)";
  return {err <= 1e-5, os.str()};
}

}  // namespace

std::vector<CheckResult> run_selftest(const SelftestOptions& opts) {
  const std::vector<std::string> known = {"attention", "token-count", "encoder-flops", "degenerate"};
  if (!opts.break_check.empty() && std::find(known.begin(), known.end(), opts.break_check) == known.end()) {
    throw Error(ErrorKind::Config, "unknown check '" + opts.break_check + "' (attention, token-count, encoder-flops, degenerate)");
  }
  opts.config.validate();
  auto broken = [&](const char* name) { return opts.break_check == name; };
  std::vector<CheckResult> out;
  out.push_back(timed("attention", [&] { return check_attention(opts.seed, broken("attention")); }));
  out.push_back(timed("token-count", [&] { return check_token_count(broken("token-count")); }));
  out.push_back(timed("encoder-flops", [&] { return check_encoder_flops(opts.seed, broken("encoder-flops")); }));
  out.push_back(timed("degenerate", [&] { return check_degenerate(opts, broken("degenerate")); }));
  return out;
}

}  // namespace cfvit::harness
