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

// Mask algebra: Dice scores, argmax binarization, Hadamard application,
// resampling (with the exact adjoint of bilinear resampling), and binary
// dilation by an arbitrary structuring element.

#ifndef MISURE_MASKS_HPP
#define MISURE_MASKS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "misure/errors.hpp"
#include "misure/tensor.hpp"

namespace misure {

inline void require_same_dims(Size2 a, Size2 b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width));
}

/// 2|a & b| / (|a| + |b|); 1 when both masks are empty.
inline double dice_hard(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a.dims(), b.dims(), "dice_hard");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    na += x;
    nb += y;
    inter += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

/// (2 sum(pq) + eps) / (sum(p) + sum(q) + eps).
inline double dice_soft(std::span<const double> p, std::span<const double> q,
                        double eps = 1.0) {
  if (p.size() != q.size()) throw ShapeError("dice_soft: length mismatch");
  if (eps < 0.0) throw ShapeError("dice_soft: eps must be >= 0");
  double pq = 0.0, sp = 0.0, sq = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    pq += p[j] * q[j];
    sp += p[j];
    sq += q[j];
  }
  const double den = sp + sq + eps;
  if (den == 0.0) return 1.0;
  return (2.0 * pq + eps) / den;
}

inline double dice_soft(const Grid<double>& p, const Grid<double>& q, double eps = 1.0) {
  require_same_dims(p.dims(), q.dims(), "dice_soft");
  return dice_soft(std::span<const double>(p.values()), std::span<const double>(q.values()),
                   eps);
}

/// Per-pixel argmax label map; ties go to the lowest class index.
inline Grid<int> argmax_labels(const ProbabilityMap& probs) {
  Grid<int> labels(probs.height(), probs.width(), 0);
  const std::size_t n = probs.plane_size();
  for (std::size_t j = 0; j < n; ++j) {
    int best = 0;
    double best_value = probs.data()[j];
    for (int c = 1; c < probs.channels(); ++c) {
      const double v = probs.data()[static_cast<std::size_t>(c) * n + j];
      if (v > best_value) {
        best_value = v;
        best = c;
      }
    }
    labels[j] = best;
  }
  return labels;
}

inline BinaryMask binarize_prediction(const ProbabilityMap& probs, int label) {
  if (label < 0 || label >= probs.channels())
    throw ShapeError("class index " + std::to_string(label) + " out of range");
  const Grid<int> labels = argmax_labels(probs);
  BinaryMask out(labels.dims());
  for (std::size_t j = 0; j < labels.size(); ++j) out[j] = labels[j] == label ? 1 : 0;
  return out;
}

/// Classes present in the argmax map, ascending, optionally without class 0.
inline std::vector<int> present_classes(const ProbabilityMap& probs, bool skip_background) {
  const Grid<int> labels = argmax_labels(probs);
  std::vector<bool> seen(probs.channels(), false);
  for (int v : labels.values()) seen[v] = true;
  std::vector<int> out;
  for (int c = skip_background ? 1 : 0; c < probs.channels(); ++c)
    if (seen[c]) out.push_back(c);
  return out;
}

/// Hadamard product of every channel with the mask (already at image size).
inline Image apply_mask(const Image& x, const Grid<double>& m) {
  require_same_dims(Size2{x.height(), x.width()}, m.dims(), "apply_mask");
  Image out = x;
  for (int c = 0; c < x.channels(); ++c) {
    auto plane = out.plane(c);
    for (std::size_t j = 0; j < plane.size(); ++j) plane[j] *= m[j];
  }
  return out;
}

inline Image apply_mask(const Image& x, const BinaryMask& m) {
  return apply_mask(x, to_continuous(m));
}

enum class ResizeMode { kNearest, kBilinear };

namespace detail {

/// Two-tap interpolation stencil along one axis (half-pixel centers).
struct Tap {
  int i0, i1;
  double w0, w1;
};

inline std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    const double frac = src - i0;
    taps[d] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

inline std::vector<int> nearest_index(int in, int out) {
  std::vector<int> idx(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d)
    idx[d] = std::min(in - 1, static_cast<int>(std::floor((d + 0.5) * scale)));
  return idx;
}

}  // namespace detail

template <typename T>
Grid<T> resize_grid(const Grid<T>& m, Size2 target, ResizeMode mode) {
  if (target.height < 1 || target.width < 1)
    throw ShapeError("resize target must be >= 1 in each dimension");
  if (target == m.dims()) return m;
  Grid<T> out(target);
  if (mode == ResizeMode::kNearest) {
    const auto ry = detail::nearest_index(m.height(), target.height);
    const auto rx = detail::nearest_index(m.width(), target.width);
    for (int y = 0; y < target.height; ++y)
      for (int x = 0; x < target.width; ++x) out(y, x) = m(ry[y], rx[x]);
    return out;
  }
  const auto ty = detail::bilinear_taps(m.height(), target.height);
  const auto tx = detail::bilinear_taps(m.width(), target.width);
  for (int y = 0; y < target.height; ++y) {
    const auto& a = ty[y];
    for (int x = 0; x < target.width; ++x) {
      const auto& b = tx[x];
      const double v = a.w0 * (b.w0 * m(a.i0, b.i0) + b.w1 * m(a.i0, b.i1)) +
                       a.w1 * (b.w0 * m(a.i1, b.i0) + b.w1 * m(a.i1, b.i1));
      out(y, x) = static_cast<T>(v);
    }
  }
  return out;
}

inline ContinuousMask resize_mask(const ContinuousMask& m, Size2 target, ResizeMode mode) {
  ContinuousMask out(target);
  out.values() = resize_grid<double>(m, target, mode).values();
  if (mode == ResizeMode::kBilinear)
    for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

inline BinaryMask resize_mask(const BinaryMask& m, Size2 target) {
  BinaryMask out(target);
  out.values() = resize_grid<std::uint8_t>(m, target, ResizeMode::kNearest).values();
  return out;
}

/// Transpose of the bilinear resize operator from `source` to `g.dims()`:
/// maps a gradient on the resized grid back onto the source grid.
inline Grid<double> resize_bilinear_adjoint(const Grid<double>& g, Size2 source) {
  if (g.dims() == source) return g;
  Grid<double> out(source, 0.0);
  const auto ty = detail::bilinear_taps(source.height, g.height());
  const auto tx = detail::bilinear_taps(source.width, g.width());
  for (int y = 0; y < g.height(); ++y) {
    const auto& a = ty[y];
    for (int x = 0; x < g.width(); ++x) {
      const auto& b = tx[x];
      const double v = g(y, x);
      out(a.i0, b.i0) += a.w0 * b.w0 * v;
      out(a.i0, b.i1) += a.w0 * b.w1 * v;
      out(a.i1, b.i0) += a.w1 * b.w0 * v;
      out(a.i1, b.i1) += a.w1 * b.w1 * v;
    }
  }
  return out;
}

/// Offsets (dy, dx) of a structuring element; always contains (0,0) and is
/// symmetric under negation.
class StructuringElement {
 public:
  /// Disk {(dy,dx) : dy^2 + dx^2 <= r^2}; radius 3 fits a 7x7 box.
  static StructuringElement disk(int radius) {
    StructuringElement se;
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dy * dy + dx * dx <= radius * radius) se.offsets_.emplace_back(dy, dx);
    return se;
  }

  static StructuringElement from_offsets(std::vector<std::pair<int, int>> offsets) {
    StructuringElement se;
    se.offsets_ = std::move(offsets);
    const auto has = [&](int dy, int dx) {
      return std::find(se.offsets_.begin(), se.offsets_.end(), std::pair{dy, dx}) !=
             se.offsets_.end();
    };
    if (!has(0, 0)) throw ShapeError("structuring element must contain (0,0)");
    for (auto [dy, dx] : se.offsets_)
      if (!has(-dy, -dx)) throw ShapeError("structuring element must be symmetric");
    return se;
  }

  const std::vector<std::pair<int, int>>& offsets() const { return offsets_; }
  std::size_t size() const { return offsets_.size(); }

 private:
  std::vector<std::pair<int, int>> offsets_;
};

/// Minkowski sum of the support with the element, cropped to the grid.
inline BinaryMask dilate(const BinaryMask& m, const StructuringElement& se) {
  BinaryMask out(m.dims(), 0);
  const int h = m.height(), w = m.width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!m(y, x)) continue;
      for (auto [dy, dx] : se.offsets()) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < h && xx >= 0 && xx < w) out(yy, xx) = 1;
      }
    }
  return out;
}

}  // namespace misure

#endif  // MISURE_MASKS_HPP
