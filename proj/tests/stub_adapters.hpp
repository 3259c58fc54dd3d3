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

// Small closed-form adapters for tests.

#ifndef MISURE_TESTS_STUB_ADAPTERS_HPP
#define MISURE_TESTS_STUB_ADAPTERS_HPP

#include <cmath>
#include <string>
#include <vector>

#include "misure/adapter.hpp"

namespace misure::testing {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Two classes; p1(y, x) = sigmoid(k * (box_mean_r(x)(y, x) - t)), where the
/// box mean averages channels over a (2r+1)^2 window with zero padding.
/// r = 0 gives a pixelwise threshold; r > 0 needs context.
class BoxAdapter final : public SegmentationAdapter {
 public:
  BoxAdapter(Shape3 input, int radius, double threshold, double gain = 20.0,
             Capabilities caps = {true, true, true})
      : input_(input), r_(radius), t_(threshold), k_(gain), caps_(caps) {}

  int num_classes() const override { return 2; }
  Shape3 input_shape() const override { return input_; }
  Capabilities capabilities() const override { return caps_; }
  std::vector<std::string> layer_names() const override { return {"bottleneck"}; }

  /// Activation map of the single "bottleneck" layer: the box mean.
  Grid<double> box_mean(const Image& x) const {
    const int h = x.height(), w = x.width();
    const double norm = static_cast<double>((2 * r_ + 1) * (2 * r_ + 1) * x.channels());
    Grid<double> a(h, w, 0.0);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int c = 0; c < x.channels(); ++c)
          for (int dy = -r_; dy <= r_; ++dy)
            for (int dx = -r_; dx <= r_; ++dx) {
              const int yy = y + dy, xq = xx + dx;
              if (yy >= 0 && yy < h && xq >= 0 && xq < w) s += x(c, yy, xq);
            }
        a(y, xx) = s / norm;
      }
    return a;
  }

 protected:
  ProbabilityMap do_forward(const Image& x) const override {
    const Grid<double> a = box_mean(x);
    ProbabilityMap p(2, x.height(), x.width());
    for (int y = 0; y < x.height(); ++y)
      for (int xx = 0; xx < x.width(); ++xx) {
        const double p1 = logistic(k_ * (a(y, xx) - t_));
        p(1, y, xx) = p1;
        p(0, y, xx) = 1.0 - p1;
      }
    return p;
  }

  /// d<cot, p>/d a at every pixel.
  Grid<double> grad_activation(const Image& x, const Tensor3<double>& cot) const {
    const Grid<double> a = box_mean(x);
    Grid<double> g(x.height(), x.width(), 0.0);
    for (int y = 0; y < x.height(); ++y)
      for (int xx = 0; xx < x.width(); ++xx) {
        const double p1 = logistic(k_ * (a(y, xx) - t_));
        g(y, xx) = (cot(1, y, xx) - cot(0, y, xx)) * k_ * p1 * (1.0 - p1);
      }
    return g;
  }

  Tensor3<double> do_vjp(const Image& x, const Tensor3<double>& cot) const override {
    const Grid<double> g = grad_activation(x, cot);
    const int h = x.height(), w = x.width();
    const double norm = static_cast<double>((2 * r_ + 1) * (2 * r_ + 1) * x.channels());
    Tensor3<double> out(x.shape(), 0.0);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int dy = -r_; dy <= r_; ++dy)
          for (int dx = -r_; dx <= r_; ++dx) {
            const int yy = y + dy, xq = xx + dx;
            if (yy >= 0 && yy < h && xq >= 0 && xq < w) s += g(yy, xq);
          }
        for (int c = 0; c < x.channels(); ++c) out(c, y, xx) = s / norm;
      }
    return out;
  }

  ActivationCapture do_activations(const Image& x, const std::string& layer) const override {
    if (layer != "bottleneck") throw ConfigError("unknown layer " + layer);
    const Grid<double> a = box_mean(x);
    ActivationCapture cap;
    cap.activations = Tensor3<double>(1, x.height(), x.width());
    for (std::size_t i = 0; i < a.size(); ++i) cap.activations.values()[i] = a[i];
    cap.gradient = [this, x](const Tensor3<double>& cot) {
      const Grid<double> g = grad_activation(x, cot);
      Tensor3<double> out(1, x.height(), x.width());
      for (std::size_t i = 0; i < g.size(); ++i) out.values()[i] = g[i];
      return out;
    };
    return cap;
  }

 private:
  Shape3 input_;
  int r_;
  double t_, k_;
  Capabilities caps_;
};

/// Always predicts background.
class BlankAdapter final : public SegmentationAdapter {
 public:
  explicit BlankAdapter(Shape3 input) : input_(input) {}
  int num_classes() const override { return 2; }
  Shape3 input_shape() const override { return input_; }
  Capabilities capabilities() const override { return {false, false, true}; }

 protected:
  ProbabilityMap do_forward(const Image& x) const override {
    ProbabilityMap p(2, x.height(), x.width(), 0.0);
    for (double& v : p.plane(0)) v = 1.0;
    return p;
  }

 private:
  Shape3 input_;
};

/// Image of `h` x `w` with the given rectangles at intensity `v`.
struct Rect {
  int y0, x0, y1, x1;  // half-open
};

inline Image rect_image(int h, int w, const std::vector<Rect>& rects, double v = 1.0) {
  Image img(1, h, w, 0.0);
  for (const auto& r : rects)
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x) img(0, y, x) = v;
  return img;
}

}  // namespace misure::testing

#endif  // MISURE_TESTS_STUB_ADAPTERS_HPP
