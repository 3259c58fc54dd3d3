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

// Sufficient-region search: start from the predicted object and dilate until
// the prediction on the masked image matches the original one.

#ifndef MISURE_SR_FINDER_HPP
#define MISURE_SR_FINDER_HPP

#include <string>
#include <vector>

#include "misure/adapter.hpp"
#include "misure/config.hpp"
#include "misure/masks.hpp"
#include "misure/metrics.hpp"

namespace misure {

struct SrTraceRow {
  int iteration;
  double dice;
  std::size_t nonzero_count;
};

struct SrResult {
  BinaryMask m_sr;  // image resolution
  Image x_sr;
  int n_dilations = 0;
  double dice_at_stop = 0.0;
  std::vector<SrTraceRow> trace;
};

/// All-ones mask of `mask_size`, resized (nearest) to the image, switched
/// off wherever the argmax prediction is not `label`.
inline BinaryMask init_mask(const ProbabilityMap& probs, int label, Size2 mask_size) {
  const BinaryMask pred = binarize_prediction(probs, label);
  if (pred.empty_support())
    throw ClassAbsentError("class " + std::to_string(label) + " absent from the prediction");
  BinaryMask m = resize_mask(BinaryMask(mask_size, 1), pred.dims());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = (m[i] && pred[i]) ? 1 : 0;
  return m;
}

inline SrResult find_sr(const SegmentationAdapter& adapter, const Image& x0, int label,
                        const MisureConfig& config) {
  config.validate();
  const ProbabilityMap p0 = adapter.forward(x0);
  const BinaryMask ref = binarize_prediction(p0, label);
  const auto se = StructuringElement::disk(config.kernel_radius);
  const int cap = config.dilation_cap(x0.height(), x0.width());

  SrResult r;
  r.m_sr = init_mask(p0, label, config.mask_size);
  for (int iter = 0;; ++iter) {
    r.x_sr = apply_mask(x0, r.m_sr);
    const auto pred = binarize_prediction(adapter.forward(r.x_sr), label);
    r.dice_at_stop = dice_hard(pred, ref);
    r.trace.push_back({iter, r.dice_at_stop, r.m_sr.count()});
    if (r.dice_at_stop > config.tau) break;
    if (r.n_dilations >= cap)
      throw MaxDilationsExceeded("no sufficient region after " + std::to_string(cap) +
                                 " dilations (dice " + std::to_string(r.dice_at_stop) + ")");
    r.m_sr = dilate(r.m_sr, se);
    ++r.n_dilations;
  }
  return r;
}

}  // namespace misure

#endif  // MISURE_SR_FINDER_HPP
