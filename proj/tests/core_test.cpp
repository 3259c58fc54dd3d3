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
#include <cstdint>
#include <filesystem>
#include <vector>

#include "misure/adapter.hpp"
#include "misure/container.hpp"
#include "misure/masks.hpp"
#include "misure/rng.hpp"
#include "misure/toy_model.hpp"
#include "stub_adapters.hpp"

namespace misure {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("misure_core_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(SplitMix64, ReferenceOutputs) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(rng.next(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(rng.next(), 0x06C45D188009454FULL);
}

TEST(SplitMix64, UniformRangesAndStreams) {
  SplitMix64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const auto k = rng.uniform_int(-3, 3);
    EXPECT_GE(k, -3);
    EXPECT_LE(k, 3);
  }
  auto a = SplitMix64::stream(7, 1), b = SplitMix64::stream(7, 1), c = SplitMix64::stream(7, 2);
  const auto va = a.next();
  EXPECT_EQ(va, b.next());
  EXPECT_NE(va, c.next());
}

TEST(SplitMix64, NormalMoments) {
  SplitMix64 rng(9);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

TEST(Tensor, RejectsEmptyShapes) {
  EXPECT_THROW(Image(0, 4, 4), ShapeError);
  EXPECT_THROW(BinaryMask(3, 0), ShapeError);
}

TEST(FloatMap, RoundTripAndLayout) {
  Tensor3<double> t(2, 3, 4);
  for (std::size_t i = 0; i < t.size(); ++i) t.values()[i] = 0.25 * static_cast<double>(i);
  const auto bytes = encode_float_map(t);
  ASSERT_EQ(bytes.size(), 6u + 12u + 4u * 24u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), "MISU-F");
  // Height, little endian.
  EXPECT_EQ(bytes[6], 3);
  EXPECT_EQ(bytes[7], 0);
  EXPECT_EQ(decode_float_map(bytes), t);

  const auto dir = temp_dir("floatmap");
  save_float_map((dir / "a.misf").string(), t);
  EXPECT_EQ(load_float_map((dir / "a.misf").string()), t);
}

TEST(FloatMap, RejectsCorruption) {
  const auto bytes = encode_float_map(Tensor3<double>(1, 2, 2, 0.5));
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_float_map(truncated), FormatError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_float_map(bad), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_float_map(extra), FormatError);
  EXPECT_THROW(load_float_map("/nonexistent/x.misf"), FormatError);
}

TEST(TensorBundle, RoundTripAndErrors) {
  std::vector<NamedTensor> ts{{"a", {2, 3}, {1, 2, 3, 4, 5, 6}}, {"b", {1}, {-0.5f}}};
  const auto bytes = encode_tensor_bundle(ts);
  const auto back = decode_tensor_bundle(bytes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "a");
  EXPECT_EQ(back[0].dims, ts[0].dims);
  EXPECT_EQ(back[0].values, ts[0].values);
  EXPECT_EQ(back[1].values, ts[1].values);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_tensor_bundle(truncated), FormatError);
  auto version = bytes;
  version[6] = 9;
  EXPECT_THROW(decode_tensor_bundle(version), FormatError);
  EXPECT_THROW(encode_tensor_bundle({{"bad", {2, 2}, {1, 2, 3}}}), FormatError);
}

ToyModelSpec small_spec(std::uint64_t seed, Shape3 input = {1, 6, 6}) {
  ToyModelSpec spec;
  spec.input = input;
  spec.channels = {3, 4};
  spec.seed = seed;
  return spec;
}

Image random_image(SplitMix64& rng, Shape3 s) {
  Image x(s);
  for (double& v : x.values()) v = rng.uniform(0.05, 0.95);
  return x;
}

TEST(ToyUNet, ReferenceParameterCount) {
  EXPECT_EQ(ToyUNet<float>(ToyModelSpec{}).parameter_count(), 42282u);
}

TEST(ToyUNet, OutputsAreOnTheSimplex) {
  const ToyAdapter<double> f{ToyUNet<double>(small_spec(1, {2, 7, 5}))};
  SplitMix64 rng(1);
  const auto p = f.forward(random_image(rng, {2, 7, 5}));
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 5; ++x) {
      double s = 0;
      for (int c = 0; c < 2; ++c) {
        EXPECT_GE(p(c, y, x), 0.0);
        s += p(c, y, x);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  EXPECT_THROW(f.forward(Image(1, 7, 5)), InputShapeError);
}

TEST(ToyUNet, ZeroHeadGivesUniformOutput) {
  auto spec = small_spec(3);
  spec.zero_init_head = true;
  spec.num_classes = 3;
  const ToyAdapter<double> f{ToyUNet<double>(spec)};
  SplitMix64 rng(2);
  const auto p = f.forward(random_image(rng, spec.input));
  for (double v : p.values()) EXPECT_NEAR(v, 1.0 / 3, 1e-12);
}

TEST(ToyUNet, VjpMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ToyAdapter<double> f{ToyUNet<double>(small_spec(seed))};
    SplitMix64 rng(seed + 100);
    const Image x = random_image(rng, {1, 6, 6});
    Tensor3<double> cot(2, 6, 6);
    for (double& v : cot.values()) v = rng.uniform(-1, 1);
    const auto g = f.vjp(x, cot);
    const auto fd = finite_difference_vjp(f, x, cot, 1e-5);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      num += (g.values()[i] - fd.values()[i]) * (g.values()[i] - fd.values()[i]);
      den += fd.values()[i] * fd.values()[i];
    }
    EXPECT_LT(std::sqrt(num / den), 1e-6) << "seed " << seed;
  }
}

TEST(ToyUNet, VjpIsLinearInCotangent) {
  const ToyAdapter<double> f{ToyUNet<double>(small_spec(4))};
  SplitMix64 rng(4);
  const Image x = random_image(rng, {1, 6, 6});
  Tensor3<double> a(2, 6, 6), b(2, 6, 6), ab(2, 6, 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.values()[i] = rng.uniform(-1, 1);
    b.values()[i] = rng.uniform(-1, 1);
    ab.values()[i] = 2.0 * a.values()[i] - 3.0 * b.values()[i];
  }
  const auto ga = f.vjp(x, a), gb = f.vjp(x, b), gab = f.vjp(x, ab);
  for (std::size_t i = 0; i < ga.size(); ++i)
    EXPECT_NEAR(gab.values()[i], 2.0 * ga.values()[i] - 3.0 * gb.values()[i], 1e-12);
}

// Perturbing the bottleneck bias b_k shifts every pre-activation of map k,
// so d<cot, p>/d b_k = sum_j g(k, j) * silu'(z(k, j)).
TEST(ToyUNet, ActivationGradientMatchesBiasFiniteDifferences) {
  const ToyUNet<double> net(small_spec(5));
  const ToyAdapter<double> f{net};
  SplitMix64 rng(5);
  const Image x = random_image(rng, {1, 6, 6});
  Tensor3<double> cot(2, 6, 6);
  for (double& v : cot.values()) v = rng.uniform(-1, 1);
  const int idx = net.layer_index("bottleneck");
  ASSERT_GE(idx, 0);
  const auto ga = f.activations(x, "bottleneck").gradient(cot);
  const auto pass = net.run(net.to_fmap(x), false);
  const auto& z = pass.nodes[idx].z;
  ASSERT_EQ(static_cast<int>(z.rows()), ga.channels());

  for (int k = 0; k < ga.channels(); ++k) {
    double analytic = 0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const double zz = z(k, j), s = 1.0 / (1.0 + std::exp(-zz));
      analytic += ga.plane(k)[j] * s * (1.0 + zz * (1.0 - s));
    }
    const double h = 1e-6;
    auto shifted = [&](double d) {
      ToyUNet<double> n2 = net;
      n2.convs()[idx].bias[k] += d;
      return inner_product(cot, ToyAdapter<double>{n2}.forward(x));
    };
    EXPECT_NEAR(analytic, (shifted(h) - shifted(-h)) / (2 * h), 1e-6) << "map " << k;
  }
  EXPECT_THROW(f.activations(x, "nope"), CapabilityError);
}

TEST(ToyUNet, DeterministicAndSaveLoad) {
  const auto spec = small_spec(11);
  const ToyUNet<float> a(spec), b(spec), c(small_spec(12));
  const ToyAdapter<float> fa{a}, fb{b}, fc{c};
  SplitMix64 rng(3);
  const Image x = random_image(rng, spec.input);
  EXPECT_EQ(fa.forward(x), fb.forward(x));
  EXPECT_NE(fa.forward(x), fc.forward(x));

  const auto dir = temp_dir("model");
  const auto path = (dir / "m.misum").string();
  a.save(path);
  const ToyAdapter<float> loaded{ToyUNet<float>::load(path)};
  EXPECT_EQ(loaded.forward(x), fa.forward(x));
  EXPECT_EQ(loaded.num_classes(), 2);
  EXPECT_EQ(loaded.input_shape(), spec.input);
}

TEST(ToyUNet, TrainingReducesLossAndIsDeterministic) {
  // Bright squares are foreground.
  std::vector<TrainingExample> data;
  SplitMix64 rng(6);
  for (int i = 0; i < 12; ++i) {
    const int y0 = static_cast<int>(rng.uniform_int(0, 9)), x0 = static_cast<int>(rng.uniform_int(0, 9));
    TrainingExample ex{testing::rect_image(16, 16, {{y0, x0, y0 + 6, x0 + 6}}), Grid<int>(16, 16, 0)};
    for (int y = y0; y < y0 + 6; ++y)
      for (int x = x0; x < x0 + 6; ++x) ex.labels(y, x) = 1;
    data.push_back(std::move(ex));
  }
  ToyModelSpec spec = small_spec(7, {1, 16, 16});
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.lr = 1e-2;
  cfg.batch_size = 4;
  TrainReport r1, r2;
  const auto n1 = train_toy_unet<double>(spec, data, cfg, &r1);
  const auto n2 = train_toy_unet<double>(spec, data, cfg, &r2);
  EXPECT_EQ(r1.epoch_loss, r2.epoch_loss);
  EXPECT_LT(r1.epoch_loss.back(), 0.5 * r1.epoch_loss.front());

  const ToyAdapter<double> f{n1};
  const auto pred = binarize_prediction(f.forward(data[0].image), 1);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) agree += (pred[i] != 0) == (data[0].labels[i] == 1);
  EXPECT_GE(static_cast<double>(agree) / pred.size(), 0.9);

  data[0].labels = Grid<int>(4, 4, 0);
  EXPECT_THROW(train_toy_unet<double>(spec, data, cfg), InputShapeError);
}

TEST(SerializedAdapter, ForwardsAndMarksThreadSafe) {
  const testing::BoxAdapter box({1, 5, 5}, 1, 0.5, 20.0, {true, true, false});
  const SerializedAdapter s(box);
  EXPECT_TRUE(s.capabilities().thread_safe);
  const Image x = testing::rect_image(5, 5, {{1, 1, 4, 4}});
  EXPECT_EQ(s.forward(x), box.forward(x));
  Tensor3<double> cot(2, 5, 5, 1.0);
  EXPECT_EQ(s.vjp(x, cot), box.vjp(x, cot));
}

TEST(Adapter, VjpValidatesCotangent) {
  const testing::BoxAdapter box({1, 5, 5}, 1, 0.5);
  const Image x(1, 5, 5, 0.5);
  EXPECT_THROW(box.vjp(x, Tensor3<double>(3, 5, 5)), InputShapeError);
  Tensor3<double> nan(2, 5, 5, 0.0);
  nan.values()[3] = std::nan("");
  EXPECT_THROW(box.vjp(x, nan), NumericalError);
  const testing::BlankAdapter blank({1, 5, 5});
  EXPECT_THROW(blank.vjp(x, Tensor3<double>(2, 5, 5)), CapabilityError);
  EXPECT_THROW(blank.activations(x, "bottleneck"), CapabilityError);
}

TEST(Adapter, BoxVjpMatchesFiniteDifferences) {
  const testing::BoxAdapter box({2, 6, 6}, 1, 0.4, 5.0);
  SplitMix64 rng(1);
  Image x(2, 6, 6);
  for (double& v : x.values()) v = rng.uniform();
  Tensor3<double> cot(2, 6, 6);
  for (double& v : cot.values()) v = rng.uniform(-1, 1);
  const auto g = box.vjp(x, cot), fd = finite_difference_vjp(box, x, cot, 1e-6);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g.values()[i], fd.values()[i], 1e-7);
}

TEST(AdapterRegistry, UnknownNameAndToyParams) {
  AdapterRegistry reg;
  register_toy_adapter(reg);
  EXPECT_TRUE(reg.contains("toy"));
  EXPECT_THROW(reg.create("nope", {}), ConfigError);
  EXPECT_THROW(reg.create("toy", {}), ConfigError);
  const auto dir = temp_dir("registry");
  const auto path = (dir / "m.misum").string();
  ToyUNet<float>(small_spec(1)).save(path);
  const auto f = reg.create("toy", {{"model", path}, {"precision", "double"}});
  EXPECT_EQ(f->input_shape(), (Shape3{1, 6, 6}));
  EXPECT_TRUE(f->capabilities().vjp);
}

}  // namespace
}  // namespace misure
