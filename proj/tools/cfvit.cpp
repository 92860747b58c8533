// SPDX-License-Identifier: Apache-2.0
// Command-line front end: weight generation, inference, eta sweeps, cost
// reports and the oracle self-test.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "cfvit/controller.hpp"
#include "cfvit/harness.hpp"
#include "cfvit/image_io.hpp"
#include "cfvit/weights_io.hpp"

namespace fs = std::filesystem;
using namespace cfvit;

namespace {

struct ConfigFlags {
  std::string config_file;
  ModelConfig cfg;
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.config_file, "JSON file with model config fields");
  app->add_option("--coarse-grid", f.cfg.coarse_grid, "coarse patches per side");
  app->add_option("--patch", f.cfg.patch_px, "fine patch side in pixels");
  app->add_option("--dim", f.cfg.embed_dim, "embedding dimension");
  app->add_option("--depth", f.cfg.depth, "encoder count");
  app->add_option("--heads", f.cfg.heads, "attention heads");
  app->add_option("--classes", f.cfg.num_classes, "class count");
  app->add_option("--mlp-ratio", f.cfg.mlp_ratio, "FFN expansion");
  app->add_option("--reuse-hidden", f.cfg.reuse_hidden, "reuse MLP width (0 = dim)");
  app->add_option("--ema-start", f.cfg.ema_start, "1-based encoder where the attention EMA starts");
  app->add_option("--alpha", f.cfg.alpha, "fraction of coarse patches to split");
  app->add_option("--beta", f.cfg.beta, "EMA momentum");
  app->add_option("--default-eta", f.cfg.eta, "exit threshold stored with the weights");
}

// Command-line flags win over the config file.
ModelConfig resolve_config(const ConfigFlags& f, const CLI::App* app) {
  ModelConfig cfg = f.cfg;
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    if (!in) throw Error(ErrorKind::Io, "cannot open config '" + f.config_file + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw Error(ErrorKind::Parse, "config '" + f.config_file + "': " + e.what());
    }
    auto take = [&](const char* key, const char* flag, auto& field) {
      if (j.contains(key) && app->count(flag) == 0) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("coarse_grid", "--coarse-grid", cfg.coarse_grid);
    take("patch_px", "--patch", cfg.patch_px);
    take("embed_dim", "--dim", cfg.embed_dim);
    take("depth", "--depth", cfg.depth);
    take("heads", "--heads", cfg.heads);
    take("num_classes", "--classes", cfg.num_classes);
    take("mlp_ratio", "--mlp-ratio", cfg.mlp_ratio);
    take("reuse_hidden", "--reuse-hidden", cfg.reuse_hidden);
    take("ema_start", "--ema-start", cfg.ema_start);
    take("alpha", "--alpha", cfg.alpha);
    take("beta", "--beta", cfg.beta);
    take("eta", "--default-eta", cfg.eta);
  }
  cfg.validate();
  return cfg;
}

struct NormFlags {
  std::vector<float> mean;
  std::vector<float> std;
};

void add_norm_flags(CLI::App* app, NormFlags& f) {
  app->add_option("--mean", f.mean, "per-channel mean for PPM standardization")->expected(3)->delimiter(',');
  app->add_option("--std", f.std, "per-channel std for PPM standardization")->expected(3)->delimiter(',');
}

io::Standardization standardization(const NormFlags& f) {
  io::Standardization s;
  if (!f.mean.empty()) std::copy_n(f.mean.begin(), 3, s.mean.begin());
  if (!f.std.empty()) std::copy_n(f.std.begin(), 3, s.std.begin());
  return s;
}

std::map<std::string, std::size_t> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open labels '" + path + "'");
  std::map<std::string, std::size_t> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw Error(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": expected filename,label");
    }
    labels[line.substr(0, comma)] = std::stoul(line.substr(comma + 1));
  }
  return labels;
}

int run_selftest(const std::string& break_check, std::uint64_t seed) {
  auto opts = harness::default_selftest_options();
  opts.break_check = break_check;
  opts.seed = seed;
  const auto results = harness::run_selftest(opts);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "  (" << r.seconds << " s)\n";
    ok = ok && r.passed;
  }
  std::cout << (ok ? "selftest: all checks passed\n" : "selftest: FAILED\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarse-to-fine adaptive ViT inference engine"};
  app.require_subcommand(1);

  ConfigFlags gen_cfg;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "write synthetic CFT1 weights");
  add_config_flags(gen, gen_cfg);
  gen->add_option("--seed", gen_seed, "PRNG seed");
  gen->add_option("--out", gen_out, "output .cft1 path")->required();

  std::string inf_weights, inf_image;
  double inf_eta = -1.0;
  std::optional<double> inf_alpha;
  bool inf_json = false, inf_attention = false, inf_no_reuse = false;
  NormFlags inf_norm;
  auto* inf = app.add_subcommand("infer", "run two-stage inference on one image");
  inf->add_option("--weights", inf_weights, "CFT1 weights")->required();
  inf->add_option("--image", inf_image, "P6 PPM or CFTI tensor")->required();
  inf->add_option("--eta", inf_eta, "exit threshold in [0,1] (default: value stored in weights)");
  inf->add_option("--alpha", inf_alpha, "split fraction (default: value stored in weights)");
  inf->add_flag("--json", inf_json, "print the JSON trace");
  inf->add_flag("--emit-attention", inf_attention, "include the final global class attention");
  inf->add_flag("--no-reuse", inf_no_reuse, "zero the feature-reuse term");
  add_norm_flags(inf, inf_norm);

  std::string sw_weights, sw_dir, sw_etas = "0:1:0.05", sw_csv, sw_labels;
  int sw_workers = 1;
  NormFlags sw_norm;
  auto* sw = app.add_subcommand("sweep", "exit statistics over a directory for a range of eta");
  sw->add_option("--weights", sw_weights, "CFT1 weights")->required();
  sw->add_option("--dir", sw_dir, "directory of .ppm / .cfti inputs")->required();
  sw->add_option("--etas", sw_etas, "start:stop:step or comma list");
  sw->add_option("--csv", sw_csv, "write CSV here instead of stdout");
  sw->add_option("--workers", sw_workers, "images processed concurrently");
  sw->add_option("--labels", sw_labels, "CSV of filename,label for correctness columns");
  add_norm_flags(sw, sw_norm);

  ConfigFlags cost_cfg;
  std::string cost_weights;
  double cost_exit = 0.0;
  auto* cst = app.add_subcommand("cost", "analytic FLOPs report");
  add_config_flags(cst, cost_cfg);
  cst->add_option("--weights", cost_weights, "take the config from a CFT1 file");
  cst->add_option("--exit-rate", cost_exit, "fraction of inputs exiting at the coarse stage");

  std::string st_break;
  std::uint64_t st_seed = 7;
  auto* st = app.add_subcommand("selftest", "run the oracle checks");
  st->add_option("--break", st_break, "inject a fault into one check (attention, token-count, encoder-flops, degenerate)");
  st->add_option("--seed", st_seed, "seed for random instances");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const ModelConfig cfg = resolve_config(gen_cfg, gen);
      const ModelWeights w = io::generate_synthetic(cfg, gen_seed);
      io::save(w, io::ContainerHeader{cfg, io::kSyntheticGenerator, gen_seed}, gen_out);
      std::cout << "wrote " << gen_out << " (" << fs::file_size(gen_out) << " bytes)\n";
      return 0;
    }
    if (*inf) {
      const auto loaded = io::load(inf_weights);
      const Tensor image = io::load_image(inf_image, standardization(inf_norm));
      check_image(image, loaded.config);
      InferOptions opts{inf_eta < 0.0 ? loaded.config.eta : inf_eta, inf_alpha, !inf_no_reuse};
      const auto outcome = infer(image, loaded.config, loaded.weights, opts);
      const auto report = harness::infer_report(outcome, loaded.config, opts, inf_attention);
      if (inf_json) {
        std::cout << report.dump(2) << '\n';
      } else {
        std::cout << "stage " << report["stage"].get<std::string>() << ", class " << outcome.predicted_class
                  << ", confidence " << outcome.confidence << ", mul-adds " << outcome.flops.total << '\n';
      }
      return 0;
    }
    if (*sw) {
      const auto loaded = io::load(sw_weights);
      const auto etas = harness::parse_etas(sw_etas);
      std::map<std::string, std::size_t> labels;
      if (!sw_labels.empty()) labels = read_labels(sw_labels);
      std::vector<harness::SweepImage> images;
      if (!fs::is_directory(sw_dir)) throw Error(ErrorKind::Io, "'" + sw_dir + "' is not a directory");
      for (const auto& entry : fs::directory_iterator(sw_dir)) {
        const auto ext = entry.path().extension().string();
        if (!entry.is_regular_file() || (ext != ".ppm" && ext != ".cfti")) continue;
        harness::SweepImage im{entry.path().filename().string(), io::load_image(entry.path(), standardization(sw_norm)),
                               std::nullopt};
        if (!sw_labels.empty()) {
          const auto it = labels.find(im.name);
          if (it == labels.end()) throw Error(ErrorKind::Validation, "no label for '" + im.name + "'");
          im.label = it->second;
        }
        images.push_back(std::move(im));
      }
      if (images.empty()) throw Error(ErrorKind::Validation, "no .ppm or .cfti inputs in '" + sw_dir + "'");
      const auto rows = harness::run_sweep(std::move(images), loaded.config, loaded.weights, etas, sw_workers);
      const std::string csv = harness::sweep_csv(rows);
      if (sw_csv.empty()) {
        std::cout << csv;
      } else {
        std::ofstream(sw_csv) << csv;
      }
      return 0;
    }
    if (*cst) {
      const ModelConfig cfg = cost_weights.empty() ? resolve_config(cost_cfg, cst) : io::load(cost_weights).config;
      std::cout << harness::cost_report_json(cfg, cost_exit).dump(2) << '\n';
      return 0;
    }
    if (*st) return run_selftest(st_break, st_seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
