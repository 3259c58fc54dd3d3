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

#ifndef MISURE_METRICS_HPP
#define MISURE_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "misure/adapter.hpp"
#include "misure/masks.hpp"

namespace misure {

struct MetricReport {
  double dice_explained = 0.0;
  double perturbation_ratio = 0.0;
  double wall_time_s = 0.0;
  int n_dilations = 0;
};

/// Class-l prediction on x0; throws ClassAbsentError when it is empty.
inline BinaryMask reference_prediction(const SegmentationAdapter& adapter, const Image& x0,
                                       int label) {
  BinaryMask pred = binarize_prediction(adapter.forward(x0), label);
  if (pred.empty_support())
    throw ClassAbsentError("class " + std::to_string(label) + " absent from the prediction");
  return pred;
}

/// Hard Dice between the class-l predictions on the saliency-masked image
/// and on the original image.
inline double dice_explained(const SegmentationAdapter& adapter, const Image& x0,
                             const Image& saliency_image, int label) {
  if (x0.shape() != saliency_image.shape())
    throw ShapeError("dice_explained: image shape mismatch");
  const BinaryMask ref = reference_prediction(adapter, x0, label);
  return dice_hard(binarize_prediction(adapter.forward(saliency_image), label), ref);
}

/// Nonzero saliency pixels divided by predicted-object pixels.
inline double perturbation_ratio(const Grid<double>& saliency, const BinaryMask& prediction) {
  require_same_dims(saliency.dims(), prediction.dims(), "perturbation_ratio");
  const std::size_t pred = prediction.count();
  if (pred == 0) throw ClassAbsentError("perturbation_ratio: empty prediction");
  const auto nz = std::count_if(saliency.values().begin(), saliency.values().end(),
                                [](double v) { return v != 0.0; });
  return static_cast<double>(nz) / static_cast<double>(pred);
}

inline double perturbation_ratio(const BinaryMask& saliency, const BinaryMask& prediction) {
  return perturbation_ratio(to_continuous(saliency), prediction);
}

struct InsertionPoint {
  double fraction;
  double dice;
};

/// Reveals pixels of x0 in order of descending saliency (ties in row-major
/// order; everything else zero) and tracks the class-l Dice against the
/// prediction on x0. `steps` evenly spaced fractions from 0 to 1.
inline std::vector<InsertionPoint> insertion_curve(const SegmentationAdapter& adapter,
                                                   const Image& x0,
                                                   const ContinuousMask& saliency, int label,
                                                   int steps) {
  if (steps < 2) throw ConfigError("insertion_curve needs steps >= 2");
  const Size2 dims{x0.height(), x0.width()};
  const ContinuousMask s = resize_mask(saliency, dims, ResizeMode::kBilinear);
  const BinaryMask ref = reference_prediction(adapter, x0, label);

  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });

  std::vector<InsertionPoint> curve;
  ContinuousMask reveal(dims, 0.0);
  std::size_t revealed = 0;
  for (int k = 0; k < steps; ++k) {
    const double fraction = static_cast<double>(k) / (steps - 1);
    const auto target = static_cast<std::size_t>(std::llround(fraction * s.size()));
    for (; revealed < target; ++revealed) reveal[order[revealed]] = 1.0;
    const auto pred = binarize_prediction(adapter.forward(apply_mask(x0, reveal)), label);
    curve.push_back({fraction, dice_hard(pred, ref)});
  }
  return curve;
}

}  // namespace misure

#endif  // MISURE_METRICS_HPP
