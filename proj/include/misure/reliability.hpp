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

// Post-hoc reliability: a logistic classifier over three saliency features
// that predicts whether the model's Dice against the ground truth reaches a
// threshold.

#ifndef MISURE_RELIABILITY_HPP
#define MISURE_RELIABILITY_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "misure/errors.hpp"
#include "misure/records.hpp"

namespace misure {

struct ReliabilityFeatures {
  int n_dilations = 0;
  double dice_msr_vs_pred = 0.0;
  double nonzero_ratio = 0.0;

  static constexpr int kCount = 3;
  std::array<double, kCount> as_array() const {
    return {static_cast<double>(n_dilations), dice_msr_vs_pred, nonzero_ratio};
  }
};

inline ReliabilityFeatures extract_features(const SaliencyRecord& r) {
  if (!r.n_dilations || !r.dice_explained || !r.perturbation_ratio)
    throw RecordError("record " + r.image_id + "/" + std::to_string(r.class_id) +
                      " lacks sufficient-region or optimized-mask results");
  ReliabilityFeatures f{*r.n_dilations, *r.dice_explained, *r.perturbation_ratio};
  for (double v : f.as_array())
    if (!std::isfinite(v)) throw RecordError("record " + r.image_id + " has a non-finite feature");
  return f;
}

/// Logistic regression on standardized features:
/// p = sigmoid(w . (x - mean) / stddev + b).
struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> mean;
  std::vector<double> stddev;
  int iterations = 0;
  double grad_norm = 0.0;

  double decision(const std::vector<double>& x) const {
    if (x.size() != weights.size())
      throw ShapeError("expected " + std::to_string(weights.size()) + " features, got " +
                       std::to_string(x.size()));
    double z = bias;
    for (std::size_t k = 0; k < x.size(); ++k) z += weights[k] * (x[k] - mean[k]) / stddev[k];
    return z;
  }

  double predict_proba(const std::vector<double>& x) const {
    const double z = decision(x);
    // Kept strictly inside (0,1) for finite inputs.
    const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::clamp(p, 1e-300, std::nextafter(1.0, 0.0));
  }
};

struct FitOptions {
  double l2 = 1e-3;
  int max_iter = 100;
  double tolerance = 1e-6;
};

/// Newton's method on mean negative log-likelihood + l2 / 2 * |w|^2 (the
/// bias is not penalized). Stops when the gradient max-norm < tolerance.
inline LogisticModel fit_logistic(const std::vector<std::vector<double>>& x,
                                  const std::vector<int>& y, const FitOptions& opt = {}) {
  if (x.size() != y.size()) throw ShapeError("feature and label counts differ");
  if (x.empty()) throw EmptyInputError("no training samples");
  const std::size_t n = x.size(), d = x.front().size();
  const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  if (pos < 2 || n - pos < 2)
    throw DegenerateLabelsError("need >= 2 samples of each label, got " + std::to_string(pos) +
                                " positive and " + std::to_string(n - pos) + " negative");

  LogisticModel m;
  m.mean.assign(d, 0.0);
  m.stddev.assign(d, 0.0);
  for (const auto& row : x) {
    if (row.size() != d) throw ShapeError("ragged feature matrix");
    for (std::size_t k = 0; k < d; ++k) m.mean[k] += row[k];
  }
  for (auto& v : m.mean) v /= static_cast<double>(n);
  for (const auto& row : x)
    for (std::size_t k = 0; k < d; ++k) m.stddev[k] += (row[k] - m.mean[k]) * (row[k] - m.mean[k]);
  for (std::size_t k = 0; k < d; ++k) {
    m.stddev[k] = std::sqrt(m.stddev[k] / static_cast<double>(n));
    if (!(m.stddev[k] > 1e-12 * std::max(1.0, std::abs(m.mean[k]))))
      throw DegenerateFeatureError("feature " + std::to_string(k) + " is constant");
  }

  // Column 0 is the intercept.
  Eigen::MatrixXd z(n, d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    z(i, 0) = 1.0;
    for (std::size_t k = 0; k < d; ++k) z(i, k + 1) = (x[i][k] - m.mean[k]) / m.stddev[k];
  }
  Eigen::VectorXd t(n);
  for (std::size_t i = 0; i < n; ++i) t(i) = y[i] == 1 ? 1.0 : 0.0;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd reg = Eigen::VectorXd::Constant(d + 1, opt.l2);
  reg(0) = 0.0;

  for (m.iterations = 0; m.iterations < opt.max_iter; ++m.iterations) {
    const Eigen::VectorXd eta = z * theta;
    const Eigen::VectorXd p = eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    const Eigen::VectorXd grad =
        z.transpose() * (p - t) / static_cast<double>(n) + reg.cwiseProduct(theta);
    m.grad_norm = grad.cwiseAbs().maxCoeff();
    if (m.grad_norm < opt.tolerance) break;
    const Eigen::VectorXd wdiag = p.cwiseProduct(Eigen::VectorXd::Ones(n) - p);
    Eigen::MatrixXd hess = z.transpose() * wdiag.asDiagonal() * z / static_cast<double>(n);
    hess.diagonal() += reg;
    hess.diagonal().array() += 1e-12;
    theta -= hess.ldlt().solve(grad);
  }
  m.bias = theta(0);
  m.weights.assign(theta.data() + 1, theta.data() + d + 1);
  return m;
}

struct ReliabilityModel {
  LogisticModel fit;
  double label_threshold = 0.9;
  double l2 = 1e-3;
  std::size_t n_train = 0;

  double predict_proba(const ReliabilityFeatures& f) const {
    const auto a = f.as_array();
    return fit.predict_proba(std::vector<double>(a.begin(), a.end()));
  }
};

inline int reliability_label(double gt_dice, double threshold) { return gt_dice >= threshold ? 1 : 0; }

inline ReliabilityModel train_reliability(const std::vector<ReliabilityFeatures>& features,
                                          const std::vector<double>& gt_dice,
                                          double threshold = 0.9, double l2 = 1e-3,
                                          int max_iter = 100) {
  if (features.size() != gt_dice.size()) throw ShapeError("feature and Dice counts differ");
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto a = features[i].as_array();
    x.emplace_back(a.begin(), a.end());
    y.push_back(reliability_label(gt_dice[i], threshold));
  }
  ReliabilityModel m;
  m.fit = fit_logistic(x, y, {l2, max_iter, 1e-6});
  m.label_threshold = threshold;
  m.l2 = l2;
  m.n_train = features.size();
  return m;
}

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> curve;
};

/// AUC by the rank statistic: the fraction of (positive, negative) pairs
/// ranked correctly, ties counting 1/2. The curve has one point per distinct
/// score (descending), preceded by (0, 0).
inline RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("score and label counts differ");
  const std::size_t n = scores.size();
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw DegenerateLabelsError("ROC needs both classes present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average 1-based ranks over tie groups.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += avg;
    i = j;
  }
  RocResult r;
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  r.auc = (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);

  r.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = n; i > 0;) {
    std::size_t j = i;
    const double s = scores[order[i - 1]];
    while (j > 0 && scores[order[j - 1]] == s) {
      (labels[order[j - 1]] == 1 ? tp : fp) += 1;
      --j;
    }
    r.curve.push_back({s, static_cast<double>(fp) / q, static_cast<double>(tp) / p});
    i = j;
  }
  return r;
}

inline double accuracy(const std::vector<double>& proba, const std::vector<int>& labels) {
  if (proba.empty() || proba.size() != labels.size()) throw ShapeError("accuracy: size mismatch");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < proba.size(); ++i) ok += (proba[i] >= 0.5 ? 1 : 0) == labels[i];
  return static_cast<double>(ok) / static_cast<double>(proba.size());
}

inline nlohmann::json to_json(const ReliabilityModel& m) {
  return {{"format", "misure-reliability"},
          {"version", 1},
          {"features", {"n_dilations", "dice_msr_vs_pred", "nonzero_ratio"}},
          {"weights", m.fit.weights},
          {"bias", m.fit.bias},
          {"mean", m.fit.mean},
          {"stddev", m.fit.stddev},
          {"label_threshold", m.label_threshold},
          {"fit", {{"l2", m.l2}, {"n_train", m.n_train}, {"iterations", m.fit.iterations},
                   {"grad_max_norm", m.fit.grad_norm}}}};
}

inline ReliabilityModel reliability_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "misure-reliability") throw FormatError("not a reliability model");
    if (j.at("version") != 1) throw FormatError("unsupported reliability model version");
    ReliabilityModel m;
    m.fit.weights = j.at("weights").get<std::vector<double>>();
    m.fit.bias = j.at("bias");
    m.fit.mean = j.at("mean").get<std::vector<double>>();
    m.fit.stddev = j.at("stddev").get<std::vector<double>>();
    m.label_threshold = j.at("label_threshold");
    m.l2 = j.at("fit").at("l2");
    m.n_train = j.at("fit").at("n_train");
    m.fit.iterations = j.at("fit").at("iterations");
    m.fit.grad_norm = j.at("fit").at("grad_max_norm");
    const auto d = static_cast<std::size_t>(ReliabilityFeatures::kCount);
    if (m.fit.weights.size() != d || m.fit.mean.size() != d || m.fit.stddev.size() != d)
      throw FormatError("reliability model must have 3 features");
    for (double s : m.fit.stddev)
      if (!(s > 0.0)) throw FormatError("reliability model has a nonpositive stddev");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("reliability model: ") + e.what());
  }
}

inline void write_roc_csv(std::ostream& out, const RocResult& r) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : r.curve)
    out << (std::isinf(p.threshold) ? std::string("inf") : detail::fmt_real(p.threshold)) << ','
        << detail::fmt_real(p.fpr) << ',' << detail::fmt_real(p.tpr) << "\n";
}

}  // namespace misure

#endif  // MISURE_RELIABILITY_HPP
