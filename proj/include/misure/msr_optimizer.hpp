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

// Minimally-sufficient-region optimization. The mask m lives at
// config.mask_size and is bilinearly resampled onto the image. Objective:
//
//   lambda / |m| * sum |m|
//   + gamma * sum (|dx m|^beta + |dy m|^beta)        forward differences,
//                                                    replicate boundary
//   + 1 - sum_{i in {0, l}} alpha_i * softdice(f(x_sr * R m)_i, f(x0)_i)
//
// Only the model's vector-Jacobian product is needed; the regularizer
// gradients are analytic and the resampling gradient is the exact adjoint
// of the bilinear resize.

#ifndef MISURE_MSR_OPTIMIZER_HPP
#define MISURE_MSR_OPTIMIZER_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

#include "misure/adapter.hpp"
#include "misure/config.hpp"
#include "misure/masks.hpp"
#include "misure/metrics.hpp"
#include "misure/sr_finder.hpp"

namespace misure {

struct ObjectiveValue {
  double total = 0.0;
  double l1 = 0.0;
  double tv = 0.0;
  double dice_loss = 0.0;
};

struct ObjectiveTraceRow {
  int iteration;
  ObjectiveValue value;
};

struct MsrResult {
  ContinuousMask m_msr;     // mask resolution
  ContinuousMask saliency;  // image resolution, resampled mask restricted to the SR
  Image x_msr;
  std::vector<ObjectiveTraceRow> objective_trace;
  MetricReport metrics;
};

namespace detail {

/// Classes entering the preservation term with their weights.
inline std::vector<std::pair<int, double>> dice_terms(int label, const MisureConfig& cfg) {
  if (label == 0) return {{0, cfg.alpha_bg}};
  return {{0, cfg.alpha_bg}, {label, cfg.alpha_fg}};
}

inline double tv_value(const Grid<double>& m, double beta) {
  double tv = 0.0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (x + 1 < m.width()) tv += std::pow(std::abs(m(y, x + 1) - m(y, x)), beta);
      if (y + 1 < m.height()) tv += std::pow(std::abs(m(y + 1, x) - m(y, x)), beta);
    }
  return tv;
}

/// Adds gamma * d(TV)/dm to grad.
inline void tv_gradient(const Grid<double>& m, double beta, double gamma, Grid<double>& grad) {
  auto term = [&](double d) {
    if (d == 0.0) return 0.0;
    return beta * std::pow(std::abs(d), beta - 1.0) * (d > 0 ? 1.0 : -1.0);
  };
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (x + 1 < m.width()) {
        const double g = gamma * term(m(y, x + 1) - m(y, x));
        grad(y, x + 1) += g;
        grad(y, x) -= g;
      }
      if (y + 1 < m.height()) {
        const double g = gamma * term(m(y + 1, x) - m(y, x));
        grad(y + 1, x) += g;
        grad(y, x) -= g;
      }
    }
}

inline Image masked_input(const Image& x_sr, const Grid<double>& m) {
  const Grid<double> m_img =
      resize_grid<double>(m, {x_sr.height(), x_sr.width()}, ResizeMode::kBilinear);
  return apply_mask(x_sr, m_img);
}

}  // namespace detail

/// Objective value with its three parts. p_ref = forward(x0), frozen.
inline ObjectiveValue objective(const SegmentationAdapter& adapter, const Image& x_sr,
                                const Grid<double>& m, const ProbabilityMap& p_ref, int label,
                                const MisureConfig& cfg) {
  ObjectiveValue v;
  double abs_sum = 0.0;
  for (double x : m.values()) abs_sum += std::abs(x);
  v.l1 = cfg.lambda * abs_sum / static_cast<double>(m.size());
  v.tv = cfg.gamma * detail::tv_value(m, cfg.beta);
  const ProbabilityMap p = adapter.forward(detail::masked_input(x_sr, m));
  if (!all_finite(p.values())) throw NumericalError("model output is not finite");
  double preserved = 0.0;
  for (auto [c, alpha] : detail::dice_terms(label, cfg))
    preserved += alpha * dice_soft(p.plane(c), p_ref.plane(c), cfg.eps);
  v.dice_loss = 1.0 - preserved;
  v.total = v.l1 + v.tv + v.dice_loss;
  return v;
}

/// Value and gradient w.r.t. the mask (at mask resolution) in one pass.
inline std::pair<ObjectiveValue, Grid<double>> objective_and_gradient(
    const SegmentationAdapter& adapter, const Image& x_sr, const Grid<double>& m,
    const ProbabilityMap& p_ref, int label, const MisureConfig& cfg) {
  if (!adapter.capabilities().vjp) throw CapabilityError("adapter does not support vjp");
  const Size2 img{x_sr.height(), x_sr.width()};
  const Image xm = detail::masked_input(x_sr, m);
  const ProbabilityMap p = adapter.forward(xm);
  if (!all_finite(p.values())) throw NumericalError("model output is not finite");

  ObjectiveValue v;
  Tensor3<double> cot(p.shape(), 0.0);
  double preserved = 0.0;
  for (auto [c, alpha] : detail::dice_terms(label, cfg)) {
    const auto pc = p.plane(c);
    const auto qc = p_ref.plane(c);
    double pq = 0.0, sp = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < pc.size(); ++j) {
      pq += pc[j] * qc[j];
      sp += pc[j];
      sq += qc[j];
    }
    const double num = 2.0 * pq + cfg.eps, den = sp + sq + cfg.eps;
    preserved += alpha * num / den;
    auto out = cot.plane(c);
    for (std::size_t j = 0; j < pc.size(); ++j)
      out[j] = -alpha * (2.0 * qc[j] * den - num) / (den * den);
  }
  v.dice_loss = 1.0 - preserved;

  const Tensor3<double> g_img = adapter.vjp(xm, cot);
  Grid<double> dm_img(img, 0.0);
  for (int c = 0; c < x_sr.channels(); ++c) {
    const auto gc = g_img.plane(c);
    const auto xc = x_sr.plane(c);
    for (std::size_t j = 0; j < gc.size(); ++j) dm_img[j] += gc[j] * xc[j];
  }
  Grid<double> grad = resize_bilinear_adjoint(dm_img, m.dims());

  double abs_sum = 0.0;
  const double l1_scale = cfg.lambda / static_cast<double>(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) {
    abs_sum += std::abs(m[j]);
    if (m[j] > 0.0) grad[j] += l1_scale;
    else if (m[j] < 0.0) grad[j] -= l1_scale;
  }
  v.l1 = l1_scale * abs_sum;
  v.tv = cfg.gamma * detail::tv_value(m, cfg.beta);
  if (cfg.gamma != 0.0) detail::tv_gradient(m, cfg.beta, cfg.gamma, grad);
  v.total = v.l1 + v.tv + v.dice_loss;
  return {v, std::move(grad)};
}

inline Grid<double> objective_gradient(const SegmentationAdapter& adapter, const Image& x_sr,
                                       const Grid<double>& m, const ProbabilityMap& p_ref,
                                       int label, const MisureConfig& cfg) {
  return objective_and_gradient(adapter, x_sr, m, p_ref, label, cfg).second;
}

/// Adaptive-moment update with decoupled weight decay. Weight decay is 0:
/// the L1 term already supplies the shrinkage.
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  std::vector<double> m1, m2;
  long step = 0;

  void update(std::vector<double>& params, const std::vector<double>& grad) {
    if (m1.empty()) {
      m1.assign(params.size(), 0.0);
      m2.assign(params.size(), 0.0);
    }
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
      m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * weight_decay * params[i];
      params[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
    }
  }
};

/// Called after every iteration with the clamped mask.
using MsrObserver = std::function<void(int iteration, const ContinuousMask& mask)>;

inline MsrResult find_msr(const SegmentationAdapter& adapter, const SrResult& sr,
                          const Image& x0, int label, const MisureConfig& cfg,
                          const MsrObserver& observer = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const ProbabilityMap p_ref = adapter.forward(x0);
  const BinaryMask pred = binarize_prediction(p_ref, label);
  if (pred.empty_support())
    throw ClassAbsentError("class " + std::to_string(label) + " absent from the prediction");

  const BinaryMask support = resize_mask(sr.m_sr, cfg.mask_size);
  ContinuousMask m = to_continuous(support);
  AdamW opt;
  opt.lr = cfg.lr;

  MsrResult r;
  for (int it = 0; it < cfg.iterations; ++it) {
    auto [value, grad] = objective_and_gradient(adapter, sr.x_sr, m, p_ref, label, cfg);
    r.objective_trace.push_back({it, value});
    opt.update(m.values(), grad.values());
    for (std::size_t j = 0; j < m.size(); ++j) {
      double& v = m[j];
      if (!std::isfinite(v)) throw NumericalError("mask became non-finite");
      if (v < cfg.clamp_low || !support[j]) v = 0.0;
      else if (v > 1.0) v = 1.0;
    }
    if (observer) observer(it, m);
  }

  const Size2 img{x0.height(), x0.width()};
  r.m_msr = m;
  r.saliency = resize_mask(m, img, ResizeMode::kBilinear);
  for (std::size_t j = 0; j < r.saliency.size(); ++j)
    if (!sr.m_sr[j]) r.saliency[j] = 0.0;
  r.x_msr = apply_mask(sr.x_sr, r.saliency);
  r.metrics.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.metrics.dice_explained = dice_hard(binarize_prediction(adapter.forward(r.x_msr), label), pred);
  r.metrics.perturbation_ratio = perturbation_ratio(r.saliency, pred);
  r.metrics.n_dilations = sr.n_dilations;
  return r;
}

}  // namespace misure

#endif  // MISURE_MSR_OPTIMIZER_HPP
