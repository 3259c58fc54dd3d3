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

#ifndef MISURE_CONFIG_HPP
#define MISURE_CONFIG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "misure/errors.hpp"
#include "misure/tensor.hpp"

namespace misure {

/// Hyperparameters of the two-stage explanation (dilation search followed by
/// mask optimization).
struct MisureConfig {
  double tau = 0.9;        // Dice threshold of the sufficient region
  double lr = 0.1;         // optimizer learning rate
  double lambda = 0.01;    // weight of the mean-absolute mask term
  double gamma = 0.01;     // weight of the total-variation term
  double beta = 3.0;       // exponent of the total-variation term
  double alpha_bg = 1.0;   // background Dice weight
  double alpha_fg = 2.0;   // foreground (class l) Dice weight
  int iterations = 100;
  double clamp_low = 0.2;  // mask values below this are zeroed after each step
  Size2 mask_size{224, 224};
  int kernel_radius = 3;   // disk structuring element, 7x7 box
  double eps = 1.0;        // soft Dice smoothing
  int max_dilations = 0;   // 0: ceil(max(H, W) / 2) + 2
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
    if (!(tau > 0.0 && tau < 1.0)) fail("tau must be in (0,1)");
    if (!(lr >= 0.0) || !(lambda >= 0.0) || !(gamma >= 0.0)) fail("lr, lambda, gamma must be >= 0");
    if (!(beta > 0.0)) fail("beta must be > 0");
    if (!(alpha_bg >= 0.0) || !(alpha_fg >= alpha_bg)) fail("need alpha_fg >= alpha_bg >= 0");
    if (iterations < 0) fail("iterations must be >= 0");
    if (!(clamp_low >= 0.0 && clamp_low < 1.0)) fail("clamp_low must be in [0,1)");
    if (mask_size.height < 1 || mask_size.width < 1) fail("mask size must be >= 1");
    if (kernel_radius < 1) fail("kernel radius must be >= 1");
    if (!(eps >= 0.0)) fail("eps must be >= 0");
    if (max_dilations < 0) fail("max_dilations must be >= 0");
  }

  /// Enough dilations to saturate any nonempty mask when the radius is >= 3,
  /// since such a disk contains every offset with |dy|, |dx| <= 2.
  int dilation_cap(int height, int width) const {
    if (max_dilations > 0) return max_dilations;
    return (std::max(height, width) + 1) / 2 + 2;
  }
};

}  // namespace misure

#endif  // MISURE_CONFIG_HPP
