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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "misure/reliability.hpp"
#include "misure/rng.hpp"

namespace misure {
namespace {

/// Fraction of (positive, negative) pairs ranked correctly, ties 1/2.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return good / pairs;
}

TEST(RocAuc, Examples) {
  EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.1}, {1, 0}).auc, 1.0);
  EXPECT_DOUBLE_EQ(roc_auc({0.1, 0.9}, {1, 0}).auc, 0.0);
  EXPECT_DOUBLE_EQ(roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}).auc, 0.5);
  EXPECT_THROW(roc_auc({0.1, 0.2}, {1, 1}), DegenerateLabelsError);
  EXPECT_THROW(roc_auc({0.1}, {1, 0}), ShapeError);
}

TEST(RocAuc, MatchesPairwiseBruteForce) {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 50));
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores force ties.
      s[i] = static_cast<double>(rng.uniform_int(0, trial % 2 ? 5 : 1000)) / 10.0;
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_NEAR(roc_auc(s, y).auc, pairwise_auc(s, y), 1e-9) << "trial " << trial;
  }
}

TEST(RocAuc, CurveShapeAndMonotoneInvariance) {
  const std::vector<double> s{0.3, 0.8, 0.8, 0.1, 0.5};
  const std::vector<int> y{0, 1, 0, 0, 1};
  const auto r = roc_auc(s, y);
  ASSERT_EQ(r.curve.size(), 5u);  // start + 4 distinct scores
  EXPECT_TRUE(std::isinf(r.curve.front().threshold));
  EXPECT_DOUBLE_EQ(r.curve.back().fpr, 1.0);
  EXPECT_DOUBLE_EQ(r.curve.back().tpr, 1.0);
  EXPECT_DOUBLE_EQ(r.curve[1].tpr, 0.5);
  EXPECT_NEAR(r.curve[1].fpr, 1.0 / 3, 1e-15);
  for (std::size_t i = 1; i < r.curve.size(); ++i) {
    EXPECT_GE(r.curve[i].fpr, r.curve[i - 1].fpr);
    EXPECT_GE(r.curve[i].tpr, r.curve[i - 1].tpr);
  }
  std::vector<double> t;
  for (double v : s) t.push_back(std::exp(3 * v) - 7);
  EXPECT_DOUBLE_EQ(roc_auc(t, y).auc, r.auc);

  std::ostringstream csv;
  write_roc_csv(csv, r);
  EXPECT_EQ(csv.str().substr(0, 24), "threshold,fpr,tpr\ninf,0,");
}

TEST(Logistic, PredictProbaMatchesHandSigmoid) {
  LogisticModel m;
  m.weights = {0.0, 0.0};
  m.mean = {0.0, 0.0};
  m.stddev = {1.0, 1.0};
  EXPECT_DOUBLE_EQ(m.predict_proba({3.0, -2.0}), 0.5);

  SplitMix64 rng(2);
  m.weights = {1.5, -0.7};
  m.bias = 0.3;
  m.mean = {0.2, 1.0};
  m.stddev = {2.0, 0.5};
  for (int i = 0; i < 50; ++i) {
    const double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
    const double z = 0.3 + 1.5 * (a - 0.2) / 2.0 - 0.7 * (b - 1.0) / 0.5;
    EXPECT_NEAR(m.predict_proba({a, b}), 1.0 / (1.0 + std::exp(-z)), 1e-14);
  }
  double prev = 0.0;
  for (double bias : {-5.0, 0.0, 5.0, 50.0}) {
    m.bias = bias;
    const double p = m.predict_proba({0.2, 1.0});
    EXPECT_GT(p, prev);
    EXPECT_LT(p, 1.0);
    prev = p;
  }
  m.bias = 1e6;
  EXPECT_LT(m.predict_proba({0.2, 1.0}), 1.0);
  m.bias = -1e6;
  EXPECT_GT(m.predict_proba({0.2, 1.0}), 0.0);
  EXPECT_THROW(m.predict_proba({1.0}), ShapeError);
}

TEST(Logistic, SeparableToyFitsPerfectly) {
  std::vector<ReliabilityFeatures> f;
  std::vector<double> gt;
  SplitMix64 rng(4);
  for (int i = 0; i < 40; ++i) {
    const bool good = i % 2 == 0;
    f.push_back({static_cast<int>(rng.uniform_int(0, 3)), good ? 1.0 : 0.0, rng.uniform(0.2, 1.5)});
    gt.push_back(good ? 0.95 : 0.5);
  }
  const auto model = train_reliability(f, gt);
  std::vector<double> p;
  std::vector<int> y;
  for (std::size_t i = 0; i < f.size(); ++i) {
    p.push_back(model.predict_proba(f[i]));
    y.push_back(reliability_label(gt[i], 0.9));
  }
  EXPECT_DOUBLE_EQ(accuracy(p, y), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(p, y).auc, 1.0);
  EXPECT_GT(model.fit.weights[1], 0.0);

  // Monotone in the positively weighted feature.
  ReliabilityFeatures probe{1, 0.0, 0.8};
  double prev = 0.0;
  for (double d = 0.0; d <= 1.0; d += 0.1) {
    probe.dice_msr_vs_pred = d;
    const double q = model.predict_proba(probe);
    EXPECT_GE(q, prev);
    prev = q;
  }

  const auto again = train_reliability(f, gt);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(again.fit.weights[k], model.fit.weights[k], 1e-10);
}

TEST(Logistic, MaximumLikelihoodStationarity) {
  // At the optimum, the mean residual is zero (unpenalized intercept) and
  // each standardized-feature residual correlation equals -l2 * w.
  SplitMix64 rng(6);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    const double a = rng.normal(), b = rng.uniform(0, 3);
    x.push_back({a, b});
    y.push_back(rng.bernoulli(1.0 / (1.0 + std::exp(-(1.2 * a - 0.8 * b + 0.5)))) ? 1 : 0);
  }
  FitOptions opt;
  opt.l2 = 0.05;
  const auto m = fit_logistic(x, y, opt);
  EXPECT_LT(m.grad_norm, 1e-6);
  double r0 = 0, r1 = 0, r2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double res = m.predict_proba(x[i]) - y[i];
    r0 += res;
    r1 += res * (x[i][0] - m.mean[0]) / m.stddev[0];
    r2 += res * (x[i][1] - m.mean[1]) / m.stddev[1];
  }
  const double n = static_cast<double>(x.size());
  EXPECT_NEAR(r0 / n, 0.0, 1e-6);
  EXPECT_NEAR(r1 / n, -0.05 * m.weights[0], 1e-6);
  EXPECT_NEAR(r2 / n, -0.05 * m.weights[1], 1e-6);
}

TEST(Logistic, PermutedLabelsGiveChanceAuc) {
  SplitMix64 rng(12);
  std::vector<ReliabilityFeatures> f;
  std::vector<double> gt;
  for (int i = 0; i < 400; ++i) {
    f.push_back({static_cast<int>(rng.uniform_int(0, 4)), rng.uniform(), rng.uniform(0, 2)});
    gt.push_back(rng.bernoulli(0.5) ? 0.95 : 0.3);
  }
  // Train on the first half, score the second.
  const std::vector<ReliabilityFeatures> ftr(f.begin(), f.begin() + 200);
  const std::vector<double> gtr(gt.begin(), gt.begin() + 200);
  const auto model = train_reliability(ftr, gtr);
  std::vector<double> p;
  std::vector<int> y;
  for (std::size_t i = 200; i < f.size(); ++i) {
    p.push_back(model.predict_proba(f[i]));
    y.push_back(reliability_label(gt[i], 0.9));
  }
  EXPECT_NEAR(roc_auc(p, y).auc, 0.5, 0.1);
}

TEST(Logistic, DegenerateInputs) {
  std::vector<ReliabilityFeatures> f{{0, 0.1, 1}, {1, 0.5, 2}, {2, 0.9, 3}, {3, 0.2, 1}};
  EXPECT_THROW(train_reliability(f, {0.95, 0.95, 0.95, 0.95}), DegenerateLabelsError);
  EXPECT_THROW(train_reliability(f, {0.95, 0.95, 0.95, 0.1}), DegenerateLabelsError);
  std::vector<ReliabilityFeatures> constant{{1, 0.1, 1}, {1, 0.5, 2}, {1, 0.9, 3}, {1, 0.2, 1}};
  EXPECT_THROW(train_reliability(constant, {0.95, 0.95, 0.1, 0.1}), DegenerateFeatureError);
  EXPECT_THROW(fit_logistic({}, {}), EmptyInputError);
  EXPECT_EQ(reliability_label(0.9, 0.9), 1);
  EXPECT_EQ(reliability_label(0.8999, 0.9), 0);
}

TEST(Reliability, JsonRoundTrip) {
  std::vector<ReliabilityFeatures> f{{0, 0.1, 1}, {1, 0.5, 2}, {2, 0.9, 3}, {3, 0.2, 1.5}, {0, 0.7, 0.4}};
  const auto m = train_reliability(f, {0.95, 0.2, 0.95, 0.3, 0.5});
  const auto back = reliability_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.fit.weights, m.fit.weights);
  EXPECT_EQ(back.fit.bias, m.fit.bias);
  EXPECT_EQ(back.n_train, 5u);
  for (const auto& x : f) EXPECT_EQ(back.predict_proba(x), m.predict_proba(x));

  auto j = to_json(m);
  j["version"] = 2;
  EXPECT_THROW(reliability_from_json(j), FormatError);
  j = to_json(m);
  j.erase("bias");
  EXPECT_THROW(reliability_from_json(j), FormatError);
  j = to_json(m);
  j["stddev"][0] = 0.0;
  EXPECT_THROW(reliability_from_json(j), FormatError);
}

SaliencyRecord record(std::string id, int cls) {
  SaliencyRecord r;
  r.image_id = std::move(id);
  r.class_id = cls;
  r.method = "misure";
  r.fingerprint = "abc";
  r.n_dilations = 3;
  r.dice_explained = 0.8;
  r.perturbation_ratio = 1.4;
  r.wall_time_s = 0.25;
  r.prediction_size_px = 120;
  r.saliency_path = "artifacts/misure/x/saliency.misf";
  return r;
}

TEST(Features, ExtractionExamples) {
  const auto f = extract_features(record("val/1", 1));
  EXPECT_EQ(f.n_dilations, 3);
  EXPECT_DOUBLE_EQ(f.dice_msr_vs_pred, 0.8);
  EXPECT_DOUBLE_EQ(f.nonzero_ratio, 1.4);
  auto zero = record("val/1", 1);
  zero.perturbation_ratio = 0.0;
  zero.n_dilations = 0;
  EXPECT_EQ(extract_features(zero).as_array(), (std::array<double, 3>{0.0, 0.8, 0.0}));
  auto rise = record("val/1", 1);
  rise.n_dilations.reset();
  EXPECT_THROW(extract_features(rise), RecordError);
  auto nan = record("val/1", 1);
  nan.dice_explained = std::nan("");
  EXPECT_THROW(extract_features(nan), RecordError);
}

TEST(Records, RoundTripSortedAndVersioned) {
  std::vector<SaliencyRecord> rs{record("val/10", 1), record("val/2", 1), record("val/2", 0)};
  rs[1].n_dilations.reset();
  rs[1].method = "rise@0.2";
  rs[0].dice_explained = 1.0 / 3.0;
  std::ostringstream out;
  write_records(out, rs, true);
  std::istringstream in(out.str());
  const auto back = read_records(in);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].key(), rs[i].key());
    EXPECT_EQ(back[i].n_dilations, rs[i].n_dilations);
    EXPECT_EQ(back[i].dice_explained, rs[i].dice_explained);
    EXPECT_EQ(back[i].saliency_path, rs[i].saliency_path);
  }
  auto sorted = rs;
  sort_records(sorted);
  EXPECT_EQ(sorted[0].image_id, "val/10");
  EXPECT_EQ(sorted[1].key(), std::make_tuple(std::string("val/2"), 0, std::string("misure")));
  EXPECT_EQ(sorted[2].method, "rise@0.2");
  EXPECT_EQ(out.str().rfind("# misure-records v1.0\n", 0), 0u);

  std::string text = out.str();
  text.replace(0, text.find('\n'), "# misure-records v2.0");
  std::istringstream v2(text);
  EXPECT_THROW(read_records(v2), FormatError);
  std::istringstream junk("image_id,class_id\n");
  EXPECT_THROW(read_records(junk), FormatError);
}

}  // namespace
}  // namespace misure
