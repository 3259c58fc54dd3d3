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

// Comparison saliency methods: RISE with Dice weights, sliding-window
// occlusion, and Seg-Grad-CAM. All outputs are min-max normalized to [0,1];
// a map with zero range normalizes to all zeros.

#ifndef MISURE_BASELINES_HPP
#define MISURE_BASELINES_HPP

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "misure/adapter.hpp"
#include "misure/masks.hpp"
#include "misure/metrics.hpp"
#include "misure/rng.hpp"

namespace misure {

struct RiseConfig {
  int n_masks = 2000;
  int grid = 7;
  double keep_prob = 0.5;
  std::vector<double> thresholds{0.2, 0.4};
  std::uint64_t seed = 0;

  void validate() const {
    if (n_masks < 1) throw ConfigError("RISE needs n_masks >= 1");
    if (grid < 1) throw ConfigError("RISE grid must be >= 1");
    if (!(keep_prob > 0.0 && keep_prob < 1.0)) throw ConfigError("keep_prob must be in (0,1)");
  }
};

struct SgcConfig {
  std::string layer = "bottleneck";
  std::vector<double> thresholds{0.05, 0.1};
};

inline ContinuousMask normalize_min_max(const Grid<double>& s) {
  ContinuousMask out(s.dims(), 0.0);
  const auto [lo, hi] = std::minmax_element(s.values().begin(), s.values().end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - *lo) / range;
  return out;
}

inline BinaryMask threshold_saliency(const Grid<double>& s, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("threshold must be in [0,1]");
  BinaryMask out(s.dims(), 0);
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] > t ? 1 : 0;
  return out;
}

/// Streams RISE masks: a grid x grid Bernoulli(keep_prob) pattern, upsampled
/// bilinearly to (grid + 1) cells and cropped at a random sub-cell shift.
class RiseMaskGenerator {
 public:
  RiseMaskGenerator(Size2 image, const RiseConfig& cfg)
      : image_(image), cfg_(cfg), rng_(cfg.seed ^ 0x52495345ULL) {
    cfg.validate();
    cell_h_ = (image.height + cfg.grid - 1) / cfg.grid;
    cell_w_ = (image.width + cfg.grid - 1) / cfg.grid;
  }

  Grid<double> next() {
    Grid<double> cells(cfg_.grid, cfg_.grid, 0.0);
    for (double& v : cells.values()) v = rng_.bernoulli(cfg_.keep_prob) ? 1.0 : 0.0;
    const Size2 up{(cfg_.grid + 1) * cell_h_, (cfg_.grid + 1) * cell_w_};
    const Grid<double> big = resize_grid(cells, up, ResizeMode::kBilinear);
    const int dy = static_cast<int>(rng_.uniform_int(0, cell_h_ - 1));
    const int dx = static_cast<int>(rng_.uniform_int(0, cell_w_ - 1));
    Grid<double> mask(image_, 0.0);
    for (int y = 0; y < image_.height; ++y)
      for (int x = 0; x < image_.width; ++x) mask(y, x) = big(y + dy, x + dx);
    return mask;
  }

 private:
  Size2 image_;
  RiseConfig cfg_;
  SplitMix64 rng_;
  int cell_h_ = 1, cell_w_ = 1;
};

/// Dice-weighted sum of the given masks, min-max normalized.
inline ContinuousMask rise_saliency_from_masks(const SegmentationAdapter& adapter,
                                               const Image& x0, int label,
                                               const std::vector<Grid<double>>& masks) {
  const BinaryMask ref = reference_prediction(adapter, x0, label);
  Grid<double> acc(ref.dims(), 0.0);
  for (const auto& m : masks) {
    const double w = dice_hard(binarize_prediction(adapter.forward(apply_mask(x0, m)), label), ref);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += w * m[j];
  }
  return normalize_min_max(acc);
}

inline ContinuousMask rise_saliency(const SegmentationAdapter& adapter, const Image& x0, int label,
                                    const RiseConfig& cfg) {
  cfg.validate();
  const BinaryMask ref = reference_prediction(adapter, x0, label);
  RiseMaskGenerator gen({x0.height(), x0.width()}, cfg);
  Grid<double> acc(ref.dims(), 0.0);
  for (int i = 0; i < cfg.n_masks; ++i) {
    const Grid<double> m = gen.next();
    const double w = dice_hard(binarize_prediction(adapter.forward(apply_mask(x0, m)), label), ref);
    if (w == 0.0) continue;
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += w * m[j];
  }
  return normalize_min_max(acc);
}

/// Window origins covering [0, extent) with the last window flush to the edge.
inline std::vector<int> window_starts(int extent, int patch, int stride) {
  std::vector<int> starts;
  if (patch >= extent) return {0};
  for (int s = 0; s + patch <= extent; s += stride) starts.push_back(s);
  if (starts.back() + patch < extent) starts.push_back(extent - patch);
  return starts;
}

/// Zeroes a patch x patch window at every stride; each pixel scores the mean
/// of 1 - Dice over the windows covering it.
inline ContinuousMask occlusion_saliency(const SegmentationAdapter& adapter, const Image& x0,
                                         int label, int patch, int stride) {
  if (patch < 1 || stride < 1) throw ConfigError("occlusion patch and stride must be >= 1");
  const BinaryMask ref = reference_prediction(adapter, x0, label);
  const int h = x0.height(), w = x0.width();
  Grid<double> score(h, w, 0.0);
  Grid<double> cover(h, w, 0.0);
  for (int y0 : window_starts(h, patch, stride))
    for (int x0w : window_starts(w, patch, stride)) {
      Image occluded = x0;
      const int y1 = std::min(h, y0 + patch), x1 = std::min(w, x0w + patch);
      for (int c = 0; c < x0.channels(); ++c)
        for (int y = y0; y < y1; ++y)
          for (int x = x0w; x < x1; ++x) occluded(c, y, x) = 0.0;
      const double s =
          1.0 - dice_hard(binarize_prediction(adapter.forward(occluded), label), ref);
      for (int y = y0; y < y1; ++y)
        for (int x = x0w; x < x1; ++x) {
          score(y, x) += s;
          cover(y, x) += 1.0;
        }
    }
  for (std::size_t j = 0; j < score.size(); ++j)
    if (cover[j] > 0.0) score[j] /= cover[j];
  return normalize_min_max(score);
}

/// ReLU(sum_k w_k A_k) with w_k the spatial mean of the gradient of map k.
inline Grid<double> grad_cam_combine(const Tensor3<double>& activations,
                                     const Tensor3<double>& gradients) {
  if (activations.shape() != gradients.shape())
    throw ShapeError("activation/gradient shape mismatch");
  Grid<double> cam(activations.height(), activations.width(), 0.0);
  for (int k = 0; k < activations.channels(); ++k) {
    double wk = 0.0;
    for (double g : gradients.plane(k)) wk += g;
    wk /= static_cast<double>(activations.plane_size());
    const auto a = activations.plane(k);
    for (std::size_t j = 0; j < a.size(); ++j) cam[j] += wk * a[j];
  }
  for (double& v : cam.values()) v = std::max(0.0, v);
  return cam;
}

/// Target = sum of the class-l probability over the class-l predicted pixels.
inline ContinuousMask seg_grad_cam(const SegmentationAdapter& adapter, const Image& x0, int label,
                                   const SgcConfig& cfg) {
  if (!adapter.capabilities().activations)
    throw CapabilityError("Seg-Grad-CAM needs the activations capability");
  const ProbabilityMap p0 = adapter.forward(x0);
  const BinaryMask pred = binarize_prediction(p0, label);
  if (pred.empty_support())
    throw ClassAbsentError("class " + std::to_string(label) + " absent from the prediction");
  const ActivationCapture cap = adapter.activations(x0, cfg.layer);
  Tensor3<double> cot(p0.shape(), 0.0);
  auto plane = cot.plane(label);
  for (std::size_t j = 0; j < plane.size(); ++j) plane[j] = pred[j] ? 1.0 : 0.0;
  const Grid<double> cam = grad_cam_combine(cap.activations, cap.gradient(cot));
  return normalize_min_max(resize_grid(cam, {x0.height(), x0.width()}, ResizeMode::kBilinear));
}

}  // namespace misure

#endif  // MISURE_BASELINES_HPP
