// Copyright 2026 The MiSuRe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// misure: dataset generation, toy-model training, saliency runs, sweeps,
// insights and reliability from the command line.
//
// Exit codes: 0 success, 1 failure (including every image failing),
// 2 bad configuration.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "misure/misure.hpp"

namespace {

using misure::RunConfig;

/// Run-config flags; only flags actually given override the config file.
struct RunFlags {
  std::string config;
  std::optional<double> tau, lr, lambda, gamma, beta, clamp_low, alpha_fg, alpha_bg, threshold,
      corrupt_fraction;
  std::optional<int> iters, rise_masks, limit, parallelism, max_dilations;
  std::optional<std::string> mask_size, method, dataset, split, model, precision, corruption, out;
  std::optional<std::uint64_t> seed;
  bool no_artifacts = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file (flags override it)");
    app->add_option("--tau", tau, "sufficient-region Dice threshold");
    app->add_option("--lr", lr, "mask optimizer learning rate");
    app->add_option("--lambda", lambda, "mask size penalty");
    app->add_option("--gamma", gamma, "total-variation weight");
    app->add_option("--beta", beta, "total-variation exponent");
    app->add_option("--iters", iters, "optimizer iterations");
    app->add_option("--clamp-low", clamp_low, "values below this are zeroed after each step");
    app->add_option("--mask-size", mask_size, "mask resolution HxW, e.g. 224x224");
    app->add_option("--alpha-fg", alpha_fg, "foreground Dice weight");
    app->add_option("--alpha-bg", alpha_bg, "background Dice weight");
    app->add_option("--max-dilations", max_dilations, "dilation cap (0: automatic)");
    app->add_option("--seed", seed, "seed for every stochastic component");
    app->add_option("--method", method, "misure, rise, occlusion or seggradcam");
    app->add_option("--rise-masks", rise_masks, "number of RISE masks");
    app->add_option("--threshold", threshold, "single saliency threshold for baseline methods");
    app->add_option("--dataset", dataset, "dataset directory");
    app->add_option("--split", split, "dataset split (train or val)");
    app->add_option("--limit", limit, "use the first N samples of the split");
    app->add_option("--model", model, "toy model file (MISU-M)");
    app->add_option("--precision", precision, "toy model arithmetic: float or double");
    app->add_option("--corrupt-fraction", corrupt_fraction, "fraction of images to corrupt");
    app->add_option("--corruption", corruption, "noise or occlude");
    app->add_option("--parallelism", parallelism, "worker threads");
    app->add_option("--out", out, "output directory (default $MISURE_OUT or misure_out)");
    app->add_flag("--no-artifacts", no_artifacts, "write records only");
  }

  RunConfig resolve() const {
    RunConfig r = config.empty() ? RunConfig{} : misure::load_run_config(config);
    auto& m = r.misure;
    if (tau) m.tau = *tau;
    if (lr) m.lr = *lr;
    if (lambda) m.lambda = *lambda;
    if (gamma) m.gamma = *gamma;
    if (beta) m.beta = *beta;
    if (iters) m.iterations = *iters;
    if (clamp_low) m.clamp_low = *clamp_low;
    if (mask_size) m.mask_size = parse_size(*mask_size);
    if (alpha_fg) m.alpha_fg = *alpha_fg;
    if (alpha_bg) m.alpha_bg = *alpha_bg;
    if (max_dilations) m.max_dilations = *max_dilations;
    if (seed) r.seed = *seed;
    if (method) r.method = *method;
    if (rise_masks) r.rise.n_masks = *rise_masks;
    if (threshold) r.rise.thresholds = r.sgc.thresholds = r.occlusion.thresholds = {*threshold};
    if (dataset) r.dataset = *dataset;
    if (split) r.split = *split;
    if (limit) r.limit = *limit;
    if (model) r.adapter_params["model"] = *model;
    if (precision) r.adapter_params["precision"] = *precision;
    if (corrupt_fraction) r.corrupt_fraction = *corrupt_fraction;
    if (corruption) r.corruption = *corruption;
    if (parallelism) r.parallelism = *parallelism;
    if (out || config.empty()) r.output = misure::default_output_root(out.value_or(""));
    if (no_artifacts) r.artifacts = false;
    if (r.dataset.empty()) throw misure::ConfigError("--dataset is required");
    r.resolve();
    r.validate();
    return r;
  }

  static misure::Size2 parse_size(const std::string& s) {
    const auto x = s.find('x');
    try {
      if (x == std::string::npos) {
        const int v = std::stoi(s);
        return {v, v};
      }
      return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::exception&) {
      throw misure::ConfigError("bad size '" + s + "', expected HxW");
    }
  }
};

int report_explain(const misure::ExplainResult& res, const std::string& out) {
  for (const auto& f : res.failures) std::cerr << "skipped " << f.image_id << ": " << f.error << "\n";
  std::cout << res.records.size() << " records from " << res.n_images << " images ("
            << res.failures.size() << " failed) -> " << out << "/records.csv\n";
  for (const auto& s : misure::summarize(res.records))
    std::printf("  %-16s n=%-4zu dice_explained=%.4f perturbation_ratio=%.4f time=%.2fs\n",
                s.method.c_str(), s.n, s.mean_dice_explained, s.mean_perturbation_ratio,
                s.mean_wall_time_s);
  return res.total_failure() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MiSuRe saliency toolkit for image segmentation"};
  app.require_subcommand(1);

  auto* dataset = app.add_subcommand("dataset", "generate a Triangle dataset");
  std::string ds_kind = "triangle-tiny", ds_out, ds_fashion;
  int ds_n = 256;
  std::uint64_t ds_seed = 0;
  dataset->add_option("--kind", ds_kind, "triangle-tiny or triangle");
  dataset->add_option("--n", ds_n, "number of samples");
  dataset->add_option("--seed", ds_seed, "generator seed");
  dataset->add_option("--out", ds_out, "output directory");
  dataset->add_option("--fashion-mnist", ds_fashion, "directory with Fashion-MNIST IDX files");

  auto* train = app.add_subcommand("train-toy", "train the toy U-Net on a dataset");
  std::string tr_dataset, tr_model;
  int tr_epochs = 20;
  double tr_lr = 2e-3;
  std::uint64_t tr_seed = 0;
  train->add_option("--dataset", tr_dataset, "dataset directory")->required();
  train->add_option("--model", tr_model, "output model file")->required();
  train->add_option("--epochs", tr_epochs, "training epochs");
  train->add_option("--lr", tr_lr, "Adam learning rate");
  train->add_option("--seed", tr_seed, "initialization and shuffling seed");

  auto* explain = app.add_subcommand("explain", "saliency maps and metrics for a dataset split");
  RunFlags ex_flags;
  ex_flags.attach(explain);

  auto* sweep = app.add_subcommand("sweep", "MiSuRe over a grid of lr x lambda or mask sizes");
  RunFlags sw_flags;
  sw_flags.attach(sweep);
  std::vector<double> sw_lrs{0.001, 0.01, 0.1}, sw_lambdas{0.001, 0.01, 0.1};
  std::vector<std::string> sw_sizes;
  sweep->add_option("--lrs", sw_lrs, "learning rates");
  sweep->add_option("--lambdas", sw_lambdas, "lambda values");
  sweep->add_option("--mask-sizes", sw_sizes, "mask sizes HxW (replaces the lr x lambda grid)");

  auto* insights = app.add_subcommand("insights", "scatter data and per-method summary");
  std::string in_records, in_out;
  insights->add_option("--records", in_records, "records CSV")->required();
  insights->add_option("--out", in_out, "output directory (default: next to the records)");

  auto* rel = app.add_subcommand("reliability", "post-hoc reliability classifier");
  misure::ReliabilityOptions rel_opt;
  rel->add_option("--records", rel_opt.records, "records CSV")->required();
  rel->add_option("--gt", rel_opt.gt_root, "dataset root with ground-truth masks");
  rel->add_option("--mode", rel_opt.mode, "train, eval or predict");
  rel->add_option("--model-dir", rel_opt.model_dir, "directory with saved models");
  rel->add_option("--out", rel_opt.output, "output directory");
  rel->add_option("--label-threshold", rel_opt.threshold, "ground-truth Dice label threshold");
  rel->add_option("--l2", rel_opt.l2, "L2 penalty");
  rel->add_option("--train-fraction", rel_opt.train_fraction, "held-out protocol train share");
  rel->add_option("--seed", rel_opt.seed, "split seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*dataset) {
      const auto out = misure::default_output_root(ds_out);
      const auto r = misure::cmd_dataset(ds_kind, ds_n, ds_seed, out, ds_fashion);
      std::cout << "wrote " << r.split.train.size() << " train / " << r.split.val.size()
                << " val samples to " << out << "\n";
      return 0;
    }
    if (*train) {
      const auto report = misure::cmd_train_toy(tr_dataset, tr_model, tr_epochs, tr_lr, tr_seed);
      std::cout << "trained " << report.epoch_loss.size() << " epochs, final loss "
                << (report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()) << " -> "
                << tr_model << "\n";
      return 0;
    }
    if (*explain) {
      const RunConfig run = ex_flags.resolve();
      return report_explain(misure::cmd_explain(run), run.output);
    }
    if (*sweep) {
      const RunConfig run = sw_flags.resolve();
      misure::SweepGrid grid;
      grid.lrs = sw_lrs;
      grid.lambdas = sw_lambdas;
      for (const auto& s : sw_sizes) grid.mask_sizes.push_back(RunFlags::parse_size(s));
      const auto rows = misure::cmd_sweep(run, grid);
      for (const auto& r : rows)
        std::printf("lr=%-6g lambda=%-6g mask=%dx%d n=%zu dice_explained=%.4f perturbation_ratio=%.4f\n",
                    r.lr, r.lambda, r.mask_size.height, r.mask_size.width, r.n_records,
                    r.mean_dice_explained, r.mean_perturbation_ratio);
      const bool all_failed = std::all_of(rows.begin(), rows.end(),
                                          [](const auto& r) { return r.n_records == 0 && r.n_failures > 0; });
      return all_failed ? 1 : 0;
    }
    if (*insights) {
      const auto records = misure::load_records(in_records);
      const auto out = in_out.empty()
                           ? std::filesystem::path(in_records).parent_path().string()
                           : in_out;
      const auto f = misure::cmd_insights(records, out.empty() ? "." : out);
      std::cout << f.points << " points -> " << f.dilations << ", " << f.perturbation << "\n";
      return 0;
    }
    if (*rel) {
      const auto rep = misure::cmd_reliability(rel_opt);
      for (const auto& e : rep.errors) std::cerr << "record " << e.image_id << ": " << e.error << "\n";
      for (const auto& r : rep.rows)
        std::printf("class %d: n_train=%zu n_test=%zu accuracy=%.4f auc=%.4f %s\n", r.class_id,
                    r.n_train, r.n_test, r.accuracy, r.auc, r.status.c_str());
      if (rel_opt.mode == "predict") return rep.models.empty() ? 1 : 0;
      const bool any_ok = std::any_of(rep.rows.begin(), rep.rows.end(),
                                      [](const auto& r) { return r.status == "ok"; });
      return any_ok ? 0 : 1;
    }
  } catch (const misure::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
