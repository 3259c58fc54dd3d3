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

// Batch driver behind the command-line tool: run configuration, saliency
// runs over a dataset split, parameter sweeps, scatter data for global
// insights, and the reliability pipeline.
//
// Every artifact is written under the run's output directory with paths
// recorded relative to it. Non-timing outputs depend only on the config and
// seed.

#ifndef MISURE_HARNESS_HPP
#define MISURE_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "misure/adapter.hpp"
#include "misure/baselines.hpp"
#include "misure/config.hpp"
#include "misure/container.hpp"
#include "misure/msr_optimizer.hpp"
#include "misure/png_io.hpp"
#include "misure/records.hpp"
#include "misure/reliability.hpp"
#include "misure/sr_finder.hpp"
#include "misure/toy_model.hpp"
#include "misure/triangle.hpp"

namespace misure {

struct OcclusionConfig {
  int patch = 8;
  int stride = 4;
  std::vector<double> thresholds{0.2, 0.4};
};

struct RunConfig {
  MisureConfig misure;
  RiseConfig rise;
  SgcConfig sgc;
  OcclusionConfig occlusion;
  std::string dataset;
  std::string split = "val";
  int limit = 0;  // 0: every sample in the split
  std::string adapter = "toy";
  AdapterParams adapter_params;
  std::string method = "misure";
  std::uint64_t seed = 0;
  double corrupt_fraction = 0.0;
  std::string corruption = "noise";
  std::string output = "misure_out";
  int parallelism = 1;
  bool artifacts = true;

  /// Copies the run seed into the stochastic components.
  void resolve() {
    misure.seed = seed;
    rise.seed = seed;
  }

  void validate() const {
    misure.validate();
    rise.validate();
    if (method != "misure" && method != "rise" && method != "occlusion" && method != "seggradcam")
      throw ConfigError("unknown method '" + method + "'");
    if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (limit < 0) throw ConfigError("limit must be >= 0");
    if (!(corrupt_fraction >= 0.0 && corrupt_fraction <= 1.0))
      throw ConfigError("corrupt_fraction must be in [0,1]");
    if (corruption != "noise" && corruption != "occlude")
      throw ConfigError("unknown corruption '" + corruption + "'");
    if (occlusion.patch < 1 || occlusion.stride < 1)
      throw ConfigError("occlusion patch and stride must be >= 1");
    for (const auto* ts : {&rise.thresholds, &sgc.thresholds, &occlusion.thresholds})
      for (double t : *ts)
        if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("thresholds must be in [0,1]");
  }
};

/// JSON view of the config. `for_fingerprint` drops fields that do not
/// change results (output location, worker count).
inline nlohmann::json to_json(const RunConfig& r, bool for_fingerprint = false) {
  const auto& m = r.misure;
  nlohmann::json j{
      {"misure",
       {{"tau", m.tau}, {"lr", m.lr}, {"lambda", m.lambda}, {"gamma", m.gamma},
        {"beta", m.beta}, {"alpha_bg", m.alpha_bg}, {"alpha_fg", m.alpha_fg},
        {"iterations", m.iterations}, {"clamp_low", m.clamp_low},
        {"mask_size", {m.mask_size.height, m.mask_size.width}},
        {"kernel_radius", m.kernel_radius}, {"eps", m.eps}, {"max_dilations", m.max_dilations}}},
      {"rise",
       {{"n_masks", r.rise.n_masks}, {"grid", r.rise.grid}, {"keep_prob", r.rise.keep_prob},
        {"thresholds", r.rise.thresholds}}},
      {"seggradcam", {{"layer", r.sgc.layer}, {"thresholds", r.sgc.thresholds}}},
      {"occlusion",
       {{"patch", r.occlusion.patch}, {"stride", r.occlusion.stride},
        {"thresholds", r.occlusion.thresholds}}},
      {"dataset", r.dataset},
      {"split", r.split},
      {"limit", r.limit},
      {"adapter", r.adapter},
      {"adapter_params", r.adapter_params},
      {"method", r.method},
      {"seed", r.seed},
      {"corrupt_fraction", r.corrupt_fraction},
      {"corruption", r.corruption},
      {"artifacts", r.artifacts}};
  if (!for_fingerprint) {
    j["output"] = r.output;
    j["parallelism"] = r.parallelism;
  }
  return j;
}

/// Applies the keys present in `j` on top of `r`; unknown keys are errors.
inline void apply_json(RunConfig& r, const nlohmann::json& j) {
  auto unknown = [](const std::string& where, const std::string& key) {
    throw ConfigError("unknown config key '" + where + key + "'");
  };
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "misure") {
        auto& m = r.misure;
        for (const auto& [k, x] : v.items()) {
          if (k == "tau") m.tau = x;
          else if (k == "lr") m.lr = x;
          else if (k == "lambda") m.lambda = x;
          else if (k == "gamma") m.gamma = x;
          else if (k == "beta") m.beta = x;
          else if (k == "alpha_bg") m.alpha_bg = x;
          else if (k == "alpha_fg") m.alpha_fg = x;
          else if (k == "iterations") m.iterations = x;
          else if (k == "clamp_low") m.clamp_low = x;
          else if (k == "mask_size") m.mask_size = {x.at(0).get<int>(), x.at(1).get<int>()};
          else if (k == "kernel_radius") m.kernel_radius = x;
          else if (k == "eps") m.eps = x;
          else if (k == "max_dilations") m.max_dilations = x;
          else unknown("misure.", k);
        }
      } else if (key == "rise") {
        for (const auto& [k, x] : v.items()) {
          if (k == "n_masks") r.rise.n_masks = x;
          else if (k == "grid") r.rise.grid = x;
          else if (k == "keep_prob") r.rise.keep_prob = x;
          else if (k == "thresholds") r.rise.thresholds = x.get<std::vector<double>>();
          else unknown("rise.", k);
        }
      } else if (key == "seggradcam") {
        for (const auto& [k, x] : v.items()) {
          if (k == "layer") r.sgc.layer = x;
          else if (k == "thresholds") r.sgc.thresholds = x.get<std::vector<double>>();
          else unknown("seggradcam.", k);
        }
      } else if (key == "occlusion") {
        for (const auto& [k, x] : v.items()) {
          if (k == "patch") r.occlusion.patch = x;
          else if (k == "stride") r.occlusion.stride = x;
          else if (k == "thresholds") r.occlusion.thresholds = x.get<std::vector<double>>();
          else unknown("occlusion.", k);
        }
      } else if (key == "dataset") r.dataset = v;
      else if (key == "split") r.split = v;
      else if (key == "limit") r.limit = v;
      else if (key == "adapter") r.adapter = v;
      else if (key == "adapter_params") r.adapter_params = v.get<AdapterParams>();
      else if (key == "method") r.method = v;
      else if (key == "seed") r.seed = v;
      else if (key == "corrupt_fraction") r.corrupt_fraction = v;
      else if (key == "corruption") r.corruption = v;
      else if (key == "output") r.output = v;
      else if (key == "parallelism") r.parallelism = v;
      else if (key == "artifacts") r.artifacts = v;
      else unknown("", key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  RunConfig r;
  try {
    apply_json(r, nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return r;
}

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string fingerprint(const RunConfig& r) { return fnv1a_hex(to_json(r, true).dump()); }

/// Output root: explicit value, else $MISURE_OUT, else "misure_out".
inline std::string default_output_root(const std::string& explicit_out = {}) {
  if (!explicit_out.empty()) return explicit_out;
  if (const char* env = std::getenv("MISURE_OUT"); env && *env) return env;
  return "misure_out";
}

/// Heavy perturbation used to manufacture unreliable predictions for the
/// reliability pipeline.
inline Image corrupt_image(const Image& x, const std::string& kind, std::uint64_t seed,
                           std::uint64_t index) {
  auto rng = SplitMix64::stream(seed ^ 0x434F52525550ULL, index);
  Image out = x;
  if (kind == "noise") {
    for (double& v : out.values()) v = std::clamp(v + 0.5 * rng.normal(), 0.0, 1.0);
  } else if (kind == "occlude") {
    // Zero a random half-plane band covering half the image.
    const int h = x.height(), w = x.width();
    const bool horizontal = rng.bernoulli(0.5);
    const int extent = horizontal ? h : w;
    const int start = static_cast<int>(rng.uniform_int(0, extent - extent / 2));
    for (int c = 0; c < x.channels(); ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const int t = horizontal ? y : xx;
          if (t >= start && t < start + extent / 2) out(c, y, xx) = 0.0;
        }
  } else {
    throw ConfigError("unknown corruption '" + kind + "'");
  }
  return out;
}

/// Positions (into a list of n samples) chosen for corruption.
inline std::vector<bool> corruption_plan(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed ^ 0x504C414EULL);
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  std::vector<bool> plan(n, false);
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < k; ++i) plan[order[i]] = true;
  return plan;
}

struct ImageFailure {
  std::string image_id;
  std::string error;
};

struct ExplainResult {
  std::vector<SaliencyRecord> records;
  std::vector<ImageFailure> failures;
  std::size_t n_images = 0;
  std::string fingerprint;

  bool total_failure() const { return n_images > 0 && failures.size() == n_images; }
};

namespace harness {

inline std::string threshold_tag(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw FormatError("cannot write " + p.string());
  out << text;
}

/// Slash-free directory name for an (image, class, method) triple.
inline std::string artifact_stem(const std::string& image_id, int label) {
  std::string s = image_id;
  std::replace(s.begin(), s.end(), '/', '_');
  return s + "_c" + std::to_string(label);
}

struct Emitter {
  std::filesystem::path root;
  bool enabled = true;

  /// Writes the saliency map, its support, the prediction and a JSON sidecar;
  /// fills the record's path fields.
  void emit(SaliencyRecord& r, const Grid<double>& saliency, const BinaryMask& prediction,
            const nlohmann::json& extra) const {
    const std::string rel = "artifacts/" + r.method + "/" + artifact_stem(r.image_id, r.class_id);
    r.saliency_path = rel + "/saliency.misf";
    r.mask_path = rel + "/mask.png";
    r.prediction_path = rel + "/prediction.png";
    if (!enabled) return;
    const auto dir = root / rel;
    std::filesystem::create_directories(dir);
    save_float_map((dir / "saliency.misf").string(), saliency);
    write_preview_png((dir / "saliency.png").string(), saliency);
    BinaryMask support(saliency.dims(), 0);
    for (std::size_t i = 0; i < support.size(); ++i) support[i] = saliency[i] != 0.0;
    write_mask_png((dir / "mask.png").string(), support);
    write_mask_png((dir / "prediction.png").string(), prediction);
    nlohmann::json meta = extra;
    meta["image_id"] = r.image_id;
    meta["class_id"] = r.class_id;
    meta["method"] = r.method;
    meta["fingerprint"] = r.fingerprint;
    meta["prediction_size_px"] = r.prediction_size_px;
    if (r.n_dilations) meta["n_dilations"] = *r.n_dilations;
    if (r.dice_explained) meta["dice_explained"] = *r.dice_explained;
    if (r.perturbation_ratio) meta["perturbation_ratio"] = *r.perturbation_ratio;
    write_text(dir / "meta.json", meta.dump(2) + "\n");
  }

  void emit_text(const SaliencyRecord& r, const std::string& name, const std::string& text) const {
    if (!enabled) return;
    write_text(root / "artifacts" / r.method / artifact_stem(r.image_id, r.class_id) / name, text);
  }
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Records for the thresholded variants of a continuous saliency map.
inline void thresholded_records(const SegmentationAdapter& adapter, const Image& x0, int label,
                                const BinaryMask& pred, const ContinuousMask& saliency,
                                const std::vector<double>& thresholds, double seconds,
                                SaliencyRecord base, const Emitter& emitter,
                                const nlohmann::json& extra,
                                std::vector<SaliencyRecord>& out) {
  for (double t : thresholds) {
    SaliencyRecord r = base;
    r.method = base.method + "@" + threshold_tag(t);
    const BinaryMask keep = threshold_saliency(saliency, t);
    r.dice_explained = dice_hard(
        binarize_prediction(adapter.forward(apply_mask(x0, keep)), label), pred);
    r.perturbation_ratio = perturbation_ratio(keep, pred);
    r.wall_time_s = seconds;
    Grid<double> kept(saliency.dims(), 0.0);
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = keep[i] ? saliency[i] : 0.0;
    auto meta = extra;
    meta["threshold"] = t;
    emitter.emit(r, kept, pred, meta);
    out.push_back(std::move(r));
  }
}

inline std::string sr_trace_csv(const SrResult& sr) {
  std::ostringstream os;
  os << "iteration,dice,nonzero_count\n";
  for (const auto& t : sr.trace)
    os << t.iteration << ',' << detail::fmt_real(t.dice) << ',' << t.nonzero_count << "\n";
  return os.str();
}

inline std::string objective_trace_csv(const MsrResult& msr) {
  std::ostringstream os;
  os << "iteration,total,l1,tv,dice_loss\n";
  for (const auto& t : msr.objective_trace)
    os << t.iteration << ',' << detail::fmt_real(t.value.total) << ','
       << detail::fmt_real(t.value.l1) << ',' << detail::fmt_real(t.value.tv) << ','
       << detail::fmt_real(t.value.dice_loss) << "\n";
  return os.str();
}

}  // namespace harness

/// All records for one image: one per class present in the prediction
/// (background excluded) and per threshold for thresholded methods.
inline std::vector<SaliencyRecord> explain_image(const SegmentationAdapter& adapter,
                                                 const Image& x0, const std::string& image_id,
                                                 const RunConfig& run, const std::string& fp,
                                                 const harness::Emitter& emitter,
                                                 const nlohmann::json& extra = {}) {
  std::vector<SaliencyRecord> out;
  const ProbabilityMap p0 = adapter.forward(x0);
  for (int label : present_classes(p0, true)) {
    const BinaryMask pred = binarize_prediction(p0, label);
    SaliencyRecord base;
    base.image_id = image_id;
    base.class_id = label;
    base.method = run.method;
    base.fingerprint = fp;
    base.prediction_size_px = static_cast<long>(pred.count());
    const auto t0 = std::chrono::steady_clock::now();

    if (run.method == "misure") {
      const SrResult sr = find_sr(adapter, x0, label, run.misure);
      const MsrResult msr = find_msr(adapter, sr, x0, label, run.misure);
      SaliencyRecord r = base;
      r.wall_time_s = harness::seconds_since(t0);
      r.n_dilations = sr.n_dilations;
      r.dice_explained = msr.metrics.dice_explained;
      r.perturbation_ratio = msr.metrics.perturbation_ratio;
      auto meta = extra;
      meta["sr_dice_at_stop"] = sr.dice_at_stop;
      meta["sr_perturbation_ratio"] = perturbation_ratio(sr.m_sr, pred);
      emitter.emit(r, msr.saliency, pred, meta);
      emitter.emit_text(r, "sr_trace.csv", harness::sr_trace_csv(sr));
      emitter.emit_text(r, "objective_trace.csv", harness::objective_trace_csv(msr));
      if (emitter.enabled)
        write_mask_png((emitter.root / "artifacts" / r.method /
                        harness::artifact_stem(r.image_id, r.class_id) / "sr_mask.png")
                           .string(),
                       sr.m_sr);
      out.push_back(std::move(r));
    } else if (run.method == "rise") {
      const ContinuousMask s = rise_saliency(adapter, x0, label, run.rise);
      harness::thresholded_records(adapter, x0, label, pred, s, run.rise.thresholds,
                                   harness::seconds_since(t0), base, emitter, extra, out);
    } else if (run.method == "occlusion") {
      const ContinuousMask s =
          occlusion_saliency(adapter, x0, label, run.occlusion.patch, run.occlusion.stride);
      harness::thresholded_records(adapter, x0, label, pred, s, run.occlusion.thresholds,
                                   harness::seconds_since(t0), base, emitter, extra, out);
    } else if (run.method == "seggradcam") {
      const ContinuousMask s = seg_grad_cam(adapter, x0, label, run.sgc);
      harness::thresholded_records(adapter, x0, label, pred, s, run.sgc.thresholds,
                                   harness::seconds_since(t0), base, emitter, extra, out);
    } else {
      throw ConfigError("unknown method '" + run.method + "'");
    }
  }
  return out;
}

inline std::unique_ptr<SegmentationAdapter> make_adapter(const RunConfig& run) {
  AdapterRegistry registry;
  register_toy_adapter(registry);
  auto adapter = registry.create(run.adapter, run.adapter_params);
  if (!adapter->capabilities().thread_safe && run.parallelism > 1)
    return std::make_unique<SerializedAdapter>(std::move(adapter));
  return adapter;
}

/// Runs one saliency method over a dataset split. Per-image failures are
/// collected, never thrown; records come back sorted by (image, class,
/// method).
inline ExplainResult run_explain(const SegmentationAdapter& adapter, const RunConfig& run_in,
                                 bool write_outputs = true) {
  RunConfig run = run_in;
  run.resolve();
  run.validate();
  ExplainResult res;
  res.fingerprint = fingerprint(run);
  auto indices = list_split(run.dataset, run.split);
  if (run.limit > 0 && indices.size() > static_cast<std::size_t>(run.limit))
    indices.resize(static_cast<std::size_t>(run.limit));
  res.n_images = indices.size();
  const auto plan = corruption_plan(indices.size(), run.corrupt_fraction, run.seed);
  const harness::Emitter emitter{run.output, write_outputs && run.artifacts};
  const std::string split_dir = (std::filesystem::path(run.dataset) / run.split).string();

  std::vector<std::vector<SaliencyRecord>> per_image(indices.size());
  std::vector<std::string> errors(indices.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < indices.size(); i = next++) {
      const std::string image_id = run.split + "/" + std::to_string(indices[i]);
      try {
        const TriangleSample s = load_sample(split_dir, std::to_string(indices[i]));
        Image x0 = s.image;
        nlohmann::json extra{{"corrupted", static_cast<bool>(plan[i])}};
        if (plan[i]) {
          x0 = corrupt_image(x0, run.corruption, run.seed, indices[i]);
          extra["corruption"] = run.corruption;
        }
        per_image[i] = explain_image(adapter, x0, image_id, run, res.fingerprint, emitter, extra);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  const int n_threads = std::min<int>(run.parallelism, std::max<std::size_t>(1, indices.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (!errors[i].empty())
      res.failures.push_back({run.split + "/" + std::to_string(indices[i]), errors[i]});
    for (auto& r : per_image[i]) res.records.push_back(std::move(r));
  }
  sort_records(res.records);

  if (write_outputs) {
    const std::filesystem::path out(run.output);
    std::filesystem::create_directories(out);
    save_records((out / "records.csv").string(), res.records);
    std::ostringstream err;
    err << "image_id,error\n";
    for (const auto& f : res.failures) {
      std::string msg = f.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      err << f.image_id << ',' << msg << "\n";
    }
    harness::write_text(out / "errors.csv", err.str());
    auto j = to_json(run);
    j["fingerprint"] = res.fingerprint;
    harness::write_text(out / "run.json", j.dump(2) + "\n");
  }
  return res;
}

inline ExplainResult cmd_explain(const RunConfig& run) {
  const auto adapter = make_adapter(run);
  return run_explain(*adapter, run);
}

struct SweepGrid {
  std::vector<double> lrs;
  std::vector<double> lambdas;
  std::vector<Size2> mask_sizes;  // nonempty: mask-size sweep at the run's lr and lambda

  std::size_t cells() const {
    return mask_sizes.empty() ? lrs.size() * lambdas.size() : mask_sizes.size();
  }
};

struct SweepRow {
  double lr = 0.0;
  double lambda = 0.0;
  Size2 mask_size;
  std::size_t n_records = 0;
  std::size_t n_failures = 0;
  double mean_dice_explained = 0.0;
  double mean_perturbation_ratio = 0.0;
};

inline constexpr int kSweepMajor = 1;

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "# misure-sweep v" << kSweepMajor << ".0\n";
  out << "lr,lambda,mask_h,mask_w,n_records,n_failures,mean_dice_explained,"
         "mean_perturbation_ratio\n";
  for (const auto& r : rows)
    out << detail::fmt_real(r.lr) << ',' << detail::fmt_real(r.lambda) << ','
        << r.mask_size.height << ',' << r.mask_size.width << ',' << r.n_records << ','
        << r.n_failures << ',' << detail::fmt_real(r.mean_dice_explained) << ','
        << detail::fmt_real(r.mean_perturbation_ratio) << "\n";
}

inline std::vector<SweepRow> read_sweep_csv(std::istream& in, const std::string& path = "sweep") {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty sweep file");
  detail::check_version_line(line, "misure-sweep", kSweepMajor, path);
  std::getline(in, line);
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 8) throw FormatError(path + ": expected 8 sweep columns");
    SweepRow r;
    r.lr = std::stod(f[0]);
    r.lambda = std::stod(f[1]);
    r.mask_size = {std::stoi(f[2]), std::stoi(f[3])};
    r.n_records = std::stoul(f[4]);
    r.n_failures = std::stoul(f[5]);
    r.mean_dice_explained = std::stod(f[6]);
    r.mean_perturbation_ratio = std::stod(f[7]);
    rows.push_back(r);
  }
  return rows;
}

/// MiSuRe over every grid cell; one row of means per cell, in grid order.
inline std::vector<SweepRow> run_sweep(const SegmentationAdapter& adapter, const RunConfig& run,
                                       const SweepGrid& grid, bool write_outputs = true) {
  if (grid.cells() == 0) throw ConfigError("sweep grid is empty");
  std::vector<RunConfig> cells;
  if (grid.mask_sizes.empty()) {
    for (double lr : grid.lrs)
      for (double lambda : grid.lambdas) {
        RunConfig c = run;
        c.misure.lr = lr;
        c.misure.lambda = lambda;
        cells.push_back(c);
      }
  } else {
    for (Size2 s : grid.mask_sizes) {
      RunConfig c = run;
      c.misure.mask_size = s;
      cells.push_back(c);
    }
  }
  std::vector<SweepRow> rows;
  for (auto& c : cells) {
    c.method = "misure";
    const ExplainResult res = run_explain(adapter, c, false);
    SweepRow row;
    row.lr = c.misure.lr;
    row.lambda = c.misure.lambda;
    row.mask_size = c.misure.mask_size;
    row.n_records = res.records.size();
    row.n_failures = res.failures.size();
    for (const auto& r : res.records) {
      row.mean_dice_explained += r.dice_explained.value_or(0.0);
      row.mean_perturbation_ratio += r.perturbation_ratio.value_or(0.0);
    }
    if (row.n_records > 0) {
      row.mean_dice_explained /= static_cast<double>(row.n_records);
      row.mean_perturbation_ratio /= static_cast<double>(row.n_records);
    }
    rows.push_back(row);
  }
  if (write_outputs) {
    std::filesystem::create_directories(run.output);
    std::ofstream out(std::filesystem::path(run.output) / "sweep.csv", std::ios::binary);
    write_sweep_csv(out, rows);
  }
  return rows;
}

inline std::vector<SweepRow> cmd_sweep(const RunConfig& run, const SweepGrid& grid) {
  const auto adapter = make_adapter(run);
  return run_sweep(*adapter, run, grid);
}

struct MethodSummary {
  std::string method;
  std::size_t n = 0;
  double mean_dice_explained = 0.0;
  double mean_perturbation_ratio = 0.0;
  double mean_wall_time_s = 0.0;
};

/// Per-method means over the records, sorted by method name.
inline std::vector<MethodSummary> summarize(const std::vector<SaliencyRecord>& records) {
  std::map<std::string, MethodSummary> by;
  for (const auto& r : records) {
    if (!r.dice_explained || !r.perturbation_ratio) continue;
    auto& s = by[r.method];
    s.method = r.method;
    ++s.n;
    s.mean_dice_explained += *r.dice_explained;
    s.mean_perturbation_ratio += *r.perturbation_ratio;
    s.mean_wall_time_s += r.wall_time_s;
  }
  std::vector<MethodSummary> out;
  for (auto& [k, s] : by) {
    const double n = static_cast<double>(s.n);
    s.mean_dice_explained /= n;
    s.mean_perturbation_ratio /= n;
    s.mean_wall_time_s /= n;
    out.push_back(s);
  }
  return out;
}

struct InsightFiles {
  std::string dilations;
  std::string perturbation;
  std::string summary;
  std::size_t points = 0;
};

/// Scatter data: (prediction size, dilations) and (prediction size,
/// perturbation ratio), one point per record, plus per-method means.
inline InsightFiles cmd_insights(const std::vector<SaliencyRecord>& records,
                                 const std::string& out_dir) {
  if (records.empty()) throw EmptyInputError("no records to summarize");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  InsightFiles f;
  f.dilations = (fs::path(out_dir) / "insights_dilations.csv").string();
  f.perturbation = (fs::path(out_dir) / "insights_perturbation.csv").string();
  f.summary = (fs::path(out_dir) / "summary.csv").string();
  std::ofstream dil(f.dilations, std::ios::binary), per(f.perturbation, std::ios::binary);
  dil << "image_id,class_id,method,prediction_size_px,n_dilations\n";
  per << "image_id,class_id,method,prediction_size_px,perturbation_ratio\n";
  for (const auto& r : records) {
    const std::string key = r.image_id + "," + std::to_string(r.class_id) + "," + r.method + "," +
                            std::to_string(r.prediction_size_px) + ",";
    dil << key << (r.n_dilations ? std::to_string(*r.n_dilations) : "") << "\n";
    per << key << (r.perturbation_ratio ? detail::fmt_real(*r.perturbation_ratio) : "") << "\n";
    ++f.points;
  }
  std::ofstream sum(f.summary, std::ios::binary);
  sum << "method,n,mean_dice_explained,mean_perturbation_ratio,mean_wall_time_s\n";
  for (const auto& s : summarize(records))
    sum << s.method << ',' << s.n << ',' << detail::fmt_real(s.mean_dice_explained) << ','
        << detail::fmt_real(s.mean_perturbation_ratio) << ','
        << detail::fmt_real(s.mean_wall_time_s) << "\n";
  return f;
}

struct DatasetResult {
  DatasetSplit split;
  nlohmann::json manifest;
};

/// kind: "triangle-tiny" (64 px) or "triangle" (128 px).
inline DatasetResult cmd_dataset(const std::string& kind, int n, std::uint64_t seed,
                                 const std::string& out, const std::string& fashion_dir = {}) {
  TriangleOptions opt;
  if (kind == "triangle-tiny") opt = TriangleOptions::tiny(n, seed);
  else if (kind == "triangle") opt = TriangleOptions::full(n, seed);
  else throw ConfigError("unknown dataset kind '" + kind + "'");
  opt.fashion_mnist_dir = fashion_dir;
  GlyphSet glyphs;
  const GlyphSet* gp = nullptr;
  if (!fashion_dir.empty()) {
    glyphs = GlyphSet::load_dir(fashion_dir);
    gp = &glyphs;
  }
  DatasetResult r;
  r.split = generate_triangle(opt, gp);
  for (const auto* part : {&r.split.train, &r.split.val})
    for (const auto& s : *part)
      if (const auto err = validate_sample(s, gp); !err.empty())
        throw PlacementError("sample " + std::to_string(s.meta.index) + ": " + err);
  save_dataset(out, opt, kind, r.split);
  r.manifest = dataset_manifest(opt, kind, r.split);
  return r;
}

/// Trains the toy model on the train split of a dataset directory.
inline TrainReport cmd_train_toy(const std::string& dataset, const std::string& model_out,
                                 int epochs, double lr, std::uint64_t seed) {
  std::vector<TrainingExample> data;
  for (auto& e : load_split(dataset, "train")) {
    Grid<int> labels(e.sample.gt_mask.dims(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = e.sample.gt_mask[i] ? 1 : 0;
    data.push_back({std::move(e.sample.image), std::move(labels)});
  }
  if (data.empty()) throw DataSourceError("no training samples in " + dataset);
  ToyModelSpec spec;
  spec.input = data.front().image.shape();
  spec.seed = seed;
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.seed = seed;
  TrainReport report;
  const auto net = train_toy_unet<float>(spec, data, cfg, &report);
  if (const auto parent = std::filesystem::path(model_out).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  net.save(model_out);
  return report;
}

/// Dice between a record's emitted prediction and the ground-truth mask
/// {gt_root}/{image_id}_mask.png.
inline double ground_truth_dice(const SaliencyRecord& r, const std::string& records_dir,
                                const std::string& gt_root) {
  namespace fs = std::filesystem;
  if (r.prediction_path.empty()) throw RecordError(r.image_id + ": record has no prediction path");
  const BinaryMask pred = read_mask_png((fs::path(records_dir) / r.prediction_path).string());
  const BinaryMask gt = read_mask_png((fs::path(gt_root) / (r.image_id + "_mask.png")).string());
  return dice_hard(pred, gt);
}

struct ReliabilityRow {
  int class_id = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_positive = 0;
  double accuracy = std::nan("");
  double auc = std::nan("");
  std::string status = "ok";
};

struct ReliabilityOptions {
  std::string records;  // records CSV; artifact paths are relative to its directory
  std::string gt_root;  // dataset root holding {split}/{index}_mask.png
  std::string mode = "train";
  std::string model_dir;  // where reliability_class<l>.json live
  std::string output;
  double threshold = 0.9;
  double l2 = 1e-3;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
};

struct ReliabilityReport {
  std::vector<ReliabilityRow> rows;
  std::vector<ImageFailure> errors;
  std::map<int, ReliabilityModel> models;
  std::map<int, RocResult> roc;
};

namespace harness {

struct LabeledSet {
  std::vector<const SaliencyRecord*> records;
  std::vector<ReliabilityFeatures> features;
  std::vector<double> gt_dice;
};

inline std::map<int, LabeledSet> collect(const std::vector<SaliencyRecord>& records,
                                         const std::string& records_dir,
                                         const std::string& gt_root, bool need_gt,
                                         std::vector<ImageFailure>& errors) {
  std::map<int, LabeledSet> by;
  for (const auto& r : records) {
    if (r.method != "misure") continue;
    try {
      const auto f = extract_features(r);
      const double d = need_gt ? ground_truth_dice(r, records_dir, gt_root) : 0.0;
      auto& s = by[r.class_id];
      s.records.push_back(&r);
      s.features.push_back(f);
      s.gt_dice.push_back(d);
    } catch (const Error& e) {
      errors.push_back({r.image_id + "/" + std::to_string(r.class_id), e.what()});
    }
  }
  return by;
}

inline std::string model_path(const std::string& dir, int label) {
  return (std::filesystem::path(dir) / ("reliability_class" + std::to_string(label) + ".json"))
      .string();
}

inline void evaluate(const ReliabilityModel& m, const std::vector<ReliabilityFeatures>& f,
                     const std::vector<double>& gt, ReliabilityRow& row, RocResult* roc) {
  std::vector<double> proba;
  std::vector<int> labels;
  for (std::size_t i = 0; i < f.size(); ++i) {
    proba.push_back(m.predict_proba(f[i]));
    labels.push_back(reliability_label(gt[i], m.label_threshold));
  }
  row.n_test = f.size();
  if (f.empty()) return;
  row.accuracy = accuracy(proba, labels);
  try {
    const auto r = roc_auc(proba, labels);
    row.auc = r.auc;
    if (roc) *roc = r;
  } catch (const DegenerateLabelsError&) {
    row.status = "test set has a single label";
  }
}

}  // namespace harness

/// train: per class, a seeded train/test split, a fitted model and held-out
/// accuracy/AUC. eval: scores every record with saved models. predict:
/// probabilities only (no ground truth needed).
inline ReliabilityReport cmd_reliability(const ReliabilityOptions& opt) {
  namespace fs = std::filesystem;
  if (opt.mode != "train" && opt.mode != "eval" && opt.mode != "predict")
    throw ConfigError("reliability mode must be train, eval or predict");
  const auto records = load_records(opt.records);
  const std::string records_dir = fs::path(opt.records).parent_path().string();
  const std::string out = opt.output.empty() ? records_dir : opt.output;
  const std::string model_dir = opt.model_dir.empty() ? out : opt.model_dir;
  fs::create_directories(out.empty() ? "." : out);
  const fs::path out_path = out.empty() ? fs::path(".") : fs::path(out);

  ReliabilityReport rep;
  auto sets = harness::collect(records, records_dir, opt.gt_root, opt.mode != "predict", rep.errors);

  if (opt.mode == "predict") {
    std::ofstream pred(out_path / "reliability_predictions.csv", std::ios::binary);
    pred << "image_id,class_id,probability\n";
    std::map<int, ReliabilityModel> cache;
    for (const auto& [label, s] : sets) {
      const auto path = harness::model_path(model_dir, label);
      std::ifstream in(path);
      if (!in) {
        for (const auto* r : s.records) rep.errors.push_back({r->image_id, "no model for class"});
        continue;
      }
      const auto m = reliability_from_json(nlohmann::json::parse(in));
      for (std::size_t i = 0; i < s.records.size(); ++i)
        pred << s.records[i]->image_id << ',' << label << ','
             << detail::fmt_real(m.predict_proba(s.features[i])) << "\n";
      rep.models[label] = m;
    }
  } else {
    for (auto& [label, s] : sets) {
      ReliabilityRow row;
      row.class_id = label;
      for (double d : s.gt_dice) row.n_positive += reliability_label(d, opt.threshold);
      try {
        ReliabilityModel m;
        std::vector<ReliabilityFeatures> test_f;
        std::vector<double> test_d;
        if (opt.mode == "train") {
          const auto is_test = corruption_plan(s.features.size(), 1.0 - opt.train_fraction, opt.seed);
          std::vector<ReliabilityFeatures> train_f;
          std::vector<double> train_d;
          for (std::size_t i = 0; i < s.features.size(); ++i) {
            (is_test[i] ? test_f : train_f).push_back(s.features[i]);
            (is_test[i] ? test_d : train_d).push_back(s.gt_dice[i]);
          }
          row.n_train = train_f.size();
          row.n_test = test_f.size();
          m = train_reliability(train_f, train_d, opt.threshold, opt.l2);
          std::ofstream(harness::model_path(out, label)) << to_json(m).dump(2) << "\n";
        } else {
          std::ifstream in(harness::model_path(model_dir, label));
          if (!in) throw RecordError("no model for class " + std::to_string(label));
          m = reliability_from_json(nlohmann::json::parse(in));
          test_f = s.features;
          test_d = s.gt_dice;
        }
        RocResult roc;
        harness::evaluate(m, test_f, test_d, row, &roc);
        if (!roc.curve.empty()) {
          std::ofstream rc(out_path / ("roc_class" + std::to_string(label) + ".csv"), std::ios::binary);
          write_roc_csv(rc, roc);
          rep.roc[label] = roc;
        }
        rep.models[label] = m;
      } catch (const Error& e) {
        row.status = e.what();
      }
      rep.rows.push_back(row);
    }
    std::ofstream mc(out_path / "reliability_metrics.csv", std::ios::binary);
    mc << "class_id,n_train,n_test,n_positive,accuracy,auc,protocol,status\n";
    const std::string protocol =
        opt.mode == "train"
            ? "holdout " + harness::threshold_tag(opt.train_fraction) + " seed " + std::to_string(opt.seed)
            : "all records";
    for (const auto& r : rep.rows) {
      std::string status = r.status;
      std::replace(status.begin(), status.end(), ',', ';');
      mc << r.class_id << ',' << r.n_train << ',' << r.n_test << ',' << r.n_positive << ','
         << detail::fmt_real(r.accuracy) << ',' << detail::fmt_real(r.auc) << ',' << protocol
         << ',' << status << "\n";
    }
  }
  std::ofstream el(out_path / "reliability_errors.csv", std::ios::binary);
  el << "record,error\n";
  for (const auto& e : rep.errors) {
    std::string msg = e.error;
    std::replace(msg.begin(), msg.end(), ',', ';');
    el << e.image_id << ',' << msg << "\n";
  }
  return rep;
}

}  // namespace misure

#endif  // MISURE_HARNESS_HPP
