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

// A miniature U-Net with hand-written backpropagation, small enough to train
// on a single CPU core in a few minutes.
//
// Layout for channels {c0, c1, ..., c(L-1)}:
//   enc k       conv(k x k) + SiLU at level k, followed by 2x2 average pooling
//   bottleneck  conv + SiLU at level L
//   dec k       nearest 2x upsample of the deeper map, concatenated with
//               enc k, conv + SiLU
//   head        1x1 conv to class logits, per-pixel softmax
// Pooling uses ceil mode and upsampling crops, so any input size works.
// SiLU and average pooling keep the network smooth, which makes
// finite-difference checks of its input gradient reliable.

#ifndef MISURE_TOY_MODEL_HPP
#define MISURE_TOY_MODEL_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "misure/adapter.hpp"
#include "misure/container.hpp"
#include "misure/errors.hpp"
#include "misure/rng.hpp"
#include "misure/tensor.hpp"

namespace misure {

struct ToyModelSpec {
  Shape3 input{1, 64, 64};
  std::vector<int> channels{8, 16, 32};
  int kernel = 3;
  int num_classes = 2;
  std::uint64_t seed = 0;
  bool zero_init_head = false;
};

namespace toy {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Feature map stored as [channels][height * width].
template <typename T>
struct Fmap {
  int h = 0, w = 0;
  Mat<T> data;
  int c() const { return static_cast<int>(data.rows()); }
};

template <typename T>
Mat<T> im2col(const Fmap<T>& in, int k) {
  const int pad = k / 2, h = in.h, w = in.w;
  Mat<T> cols = Mat<T>::Zero(static_cast<Eigen::Index>(in.c()) * k * k,
                             static_cast<Eigen::Index>(h) * w);
  for (int c = 0; c < in.c(); ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const auto row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            if (sx < 0 || sx >= w) continue;
            cols(row, y * w + x) = in.data(c, sy * w + sx);
          }
        }
      }
  return cols;
}

template <typename T>
Mat<T> col2im(const Mat<T>& cols, int channels, int h, int w, int k) {
  const int pad = k / 2;
  Mat<T> out = Mat<T>::Zero(channels, static_cast<Eigen::Index>(h) * w);
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const auto row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            if (sx < 0 || sx >= w) continue;
            out(c, sy * w + sx) += cols(row, y * w + x);
          }
        }
      }
  return out;
}

template <typename T>
Fmap<T> avg_pool2(const Fmap<T>& in) {
  Fmap<T> out{(in.h + 1) / 2, (in.w + 1) / 2, {}};
  out.data = Mat<T>::Zero(in.c(), static_cast<Eigen::Index>(out.h) * out.w);
  for (int c = 0; c < in.c(); ++c)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) {
        T sum = 0;
        int n = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int sy = 2 * y + dy, sx = 2 * x + dx;
            if (sy < in.h && sx < in.w) {
              sum += in.data(c, sy * in.w + sx);
              ++n;
            }
          }
        out.data(c, y * out.w + x) = sum / static_cast<T>(n);
      }
  return out;
}

template <typename T>
Mat<T> avg_pool2_backward(const Mat<T>& dout, int in_h, int in_w) {
  const int oh = (in_h + 1) / 2, ow = (in_w + 1) / 2;
  Mat<T> din = Mat<T>::Zero(dout.rows(), static_cast<Eigen::Index>(in_h) * in_w);
  for (Eigen::Index c = 0; c < dout.rows(); ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const int ny = std::min(2, in_h - 2 * y), nx = std::min(2, in_w - 2 * x);
        const T g = dout(c, y * ow + x) / static_cast<T>(ny * nx);
        for (int dy = 0; dy < ny; ++dy)
          for (int dx = 0; dx < nx; ++dx) din(c, (2 * y + dy) * in_w + 2 * x + dx) += g;
      }
  return din;
}

template <typename T>
Fmap<T> upsample2(const Fmap<T>& in, int th, int tw) {
  Fmap<T> out{th, tw, Mat<T>(in.c(), static_cast<Eigen::Index>(th) * tw)};
  for (int c = 0; c < in.c(); ++c)
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x) out.data(c, y * tw + x) = in.data(c, (y / 2) * in.w + x / 2);
  return out;
}

template <typename T>
Mat<T> upsample2_backward(const Mat<T>& dout, int th, int tw, int in_h, int in_w) {
  Mat<T> din = Mat<T>::Zero(dout.rows(), static_cast<Eigen::Index>(in_h) * in_w);
  for (Eigen::Index c = 0; c < dout.rows(); ++c)
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x) din(c, (y / 2) * in_w + x / 2) += dout(c, y * tw + x);
  return din;
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace toy

template <typename T>
class ToyUNet {
 public:
  using Mat = toy::Mat<T>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  using Fmap = toy::Fmap<T>;

  struct Conv {
    std::string name;
    int in = 0, out = 0, k = 0;
    Mat weight;  // [out][in * k * k]
    Vec bias;
  };

  /// Intermediate state of one forward pass.
  struct Pass {
    struct Node {
      Fmap input;
      Mat cols;  // kept only when parameter gradients are needed
      Mat z;     // pre-activation
      Fmap output;
    };
    std::vector<Node> nodes;
    std::vector<Fmap> pooled;
    Mat probs;  // [classes][h * w]
  };

  struct Gradients {
    std::vector<Mat> weight;
    std::vector<Vec> bias;
  };

  ToyUNet() = default;

  explicit ToyUNet(const ToyModelSpec& spec) : spec_(spec) {
    if (spec.channels.empty()) throw ConfigError("toy model needs at least one level");
    if (spec.kernel < 1 || spec.kernel % 2 == 0) throw ConfigError("kernel must be odd");
    if (spec.num_classes < 2) throw ConfigError("toy model needs >= 2 classes");
    const int levels = static_cast<int>(spec.channels.size());
    const int k = spec.kernel;
    const auto& ch = spec.channels;
    for (int l = 0; l < levels; ++l)
      add_conv("enc" + std::to_string(l), l == 0 ? spec.input.channels : ch[l - 1], ch[l], k);
    add_conv("bottleneck", ch[levels - 1], ch[levels - 1], k);
    for (int l = levels - 1; l >= 0; --l) {
      const int prev = (l == levels - 1) ? ch[levels - 1] : ch[l + 1];
      add_conv("dec" + std::to_string(l), prev + ch[l], ch[l], k);
    }
    add_conv("head", ch[0], spec.num_classes, 1);

    SplitMix64 rng(spec.seed);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      auto& conv = convs_[i];
      const bool head = i + 1 == convs_.size();
      const double fan_in = static_cast<double>(conv.in) * conv.k * conv.k;
      const double stddev = head ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
      for (Eigen::Index j = 0; j < conv.weight.size(); ++j)
        conv.weight.data()[j] =
            (head && spec.zero_init_head) ? T(0) : static_cast<T>(stddev * rng.normal());
    }
  }

  const ToyModelSpec& spec() const { return spec_; }
  const std::vector<Conv>& convs() const { return convs_; }
  std::vector<Conv>& convs() { return convs_; }
  int levels() const { return static_cast<int>(spec_.channels.size()); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& c : convs_) n += c.weight.size() + c.bias.size();
    return n;
  }

  std::vector<std::string> layer_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i + 1 < convs_.size(); ++i) names.push_back(convs_[i].name);
    return names;
  }

  int layer_index(const std::string& name) const {
    for (std::size_t i = 0; i + 1 < convs_.size(); ++i)
      if (convs_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  Fmap to_fmap(const Image& image) const {
    Fmap f{image.height(), image.width(), Mat(image.channels(), image.plane_size())};
    for (std::size_t i = 0; i < image.size(); ++i) f.data.data()[i] = static_cast<T>(image.data()[i]);
    return f;
  }

  Pass run(const Fmap& x, bool keep_cols) const {
    const int L = levels();
    Pass pass;
    pass.nodes.resize(convs_.size());
    pass.pooled.resize(L);
    Fmap cur = x;
    for (int l = 0; l < L; ++l) {
      apply_conv(l, cur, true, keep_cols, pass.nodes[l]);
      pass.pooled[l] = toy::avg_pool2(pass.nodes[l].output);
      cur = pass.pooled[l];
    }
    apply_conv(L, cur, true, keep_cols, pass.nodes[L]);
    for (int l = L - 1; l >= 0; --l) {
      const int idx = dec_index(l);
      const Fmap& prev = pass.nodes[idx - 1].output;
      const Fmap& skip = pass.nodes[l].output;
      Fmap up = toy::upsample2(prev, skip.h, skip.w);
      Fmap cat{skip.h, skip.w, Mat(up.c() + skip.c(), up.data.cols())};
      cat.data << up.data, skip.data;
      apply_conv(idx, cat, true, keep_cols, pass.nodes[idx]);
    }
    const int head = static_cast<int>(convs_.size()) - 1;
    apply_conv(head, pass.nodes[head - 1].output, false, keep_cols, pass.nodes[head]);
    pass.probs = softmax(pass.nodes[head].output.data);
    return pass;
  }

  /// Backpropagates a gradient on the logits. Optionally accumulates
  /// parameter gradients, records the gradient w.r.t. every named layer
  /// output, and returns the gradient w.r.t. the input.
  Fmap backward(const Pass& pass, const Mat& dlogits, Gradients* grads, bool need_input,
                std::vector<Mat>* layer_grads = nullptr) const {
    const int L = levels();
    const int head = static_cast<int>(convs_.size()) - 1;
    std::vector<Mat> dout(convs_.size());
    for (int l = 0; l < L; ++l) {
      const auto& o = pass.nodes[l].output;
      dout[l] = Mat::Zero(o.c(), o.data.cols());
    }
    dout[head - 1] = conv_backward(head, pass.nodes[head], dlogits, false, grads, true);
    for (int l = 0; l < L; ++l) {
      const int idx = dec_index(l);
      Mat dcat = conv_backward(idx, pass.nodes[idx], dout[idx], true, grads, true);
      const Fmap& prev = pass.nodes[idx - 1].output;
      const Fmap& skip = pass.nodes[l].output;
      const auto up_c = prev.c();
      dout[l] += dcat.bottomRows(skip.c());
      dout[idx - 1] = toy::upsample2_backward<T>(dcat.topRows(up_c), skip.h, skip.w, prev.h, prev.w);
    }
    Mat dpooled = conv_backward(L, pass.nodes[L], dout[L], true, grads, true);
    for (int l = L - 1; l >= 0; --l) {
      const Fmap& o = pass.nodes[l].output;
      dout[l] += toy::avg_pool2_backward<T>(dpooled, o.h, o.w);
      const bool need = l > 0 || need_input;
      dpooled = conv_backward(l, pass.nodes[l], dout[l], true, grads, need);
    }
    if (layer_grads) *layer_grads = std::move(dout);
    Fmap dx;
    if (need_input) {
      dx.h = pass.nodes[0].input.h;
      dx.w = pass.nodes[0].input.w;
      dx.data = std::move(dpooled);
    }
    return dx;
  }

  /// d<cot, probs>/dlogits for a per-pixel softmax.
  static Mat softmax_vjp(const Mat& probs, const Mat& cot) {
    Mat d = probs.cwiseProduct(cot);
    const Eigen::Matrix<T, 1, Eigen::Dynamic> s = d.colwise().sum();
    for (Eigen::Index c = 0; c < probs.rows(); ++c) d.row(c) -= probs.row(c).cwiseProduct(s);
    return d;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& c : convs_) {
      g.weight.push_back(Mat::Zero(c.weight.rows(), c.weight.cols()));
      g.bias.push_back(Vec::Zero(c.bias.size()));
    }
    return g;
  }

  template <typename U>
  ToyUNet<U> cast() const {
    ToyUNet<U> out(spec_);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      out.convs()[i].weight = convs_[i].weight.template cast<U>();
      out.convs()[i].bias = convs_[i].bias.template cast<U>();
    }
    return out;
  }

  std::vector<NamedTensor> to_tensors() const {
    std::vector<NamedTensor> out;
    NamedTensor meta{"meta.spec", {}, {}};
    meta.values = {static_cast<float>(spec_.input.channels), static_cast<float>(spec_.input.height),
                   static_cast<float>(spec_.input.width), static_cast<float>(spec_.num_classes),
                   static_cast<float>(spec_.kernel)};
    for (int c : spec_.channels) meta.values.push_back(static_cast<float>(c));
    meta.dims = {static_cast<std::uint32_t>(meta.values.size())};
    out.push_back(meta);
    for (const auto& c : convs_) {
      NamedTensor w{c.name + ".weight",
                    {static_cast<std::uint32_t>(c.out), static_cast<std::uint32_t>(c.in),
                     static_cast<std::uint32_t>(c.k), static_cast<std::uint32_t>(c.k)},
                    {}};
      for (Eigen::Index j = 0; j < c.weight.size(); ++j)
        w.values.push_back(static_cast<float>(c.weight.data()[j]));
      NamedTensor b{c.name + ".bias", {static_cast<std::uint32_t>(c.out)}, {}};
      for (Eigen::Index j = 0; j < c.bias.size(); ++j)
        b.values.push_back(static_cast<float>(c.bias[j]));
      out.push_back(std::move(w));
      out.push_back(std::move(b));
    }
    return out;
  }

  static ToyUNet from_tensors(const std::vector<NamedTensor>& tensors) {
    auto find = [&](const std::string& name) -> const NamedTensor& {
      for (const auto& t : tensors)
        if (t.name == name) return t;
      throw FormatError("model file lacks tensor '" + name + "'");
    };
    const auto& meta = find("meta.spec");
    if (meta.values.size() < 6) throw FormatError("model spec tensor too short");
    ToyModelSpec spec;
    spec.input = {static_cast<int>(meta.values[0]), static_cast<int>(meta.values[1]),
                  static_cast<int>(meta.values[2])};
    spec.num_classes = static_cast<int>(meta.values[3]);
    spec.kernel = static_cast<int>(meta.values[4]);
    spec.channels.clear();
    for (std::size_t i = 5; i < meta.values.size(); ++i)
      spec.channels.push_back(static_cast<int>(meta.values[i]));
    ToyUNet net(spec);
    for (auto& c : net.convs_) {
      const auto& w = find(c.name + ".weight");
      const auto& b = find(c.name + ".bias");
      if (w.values.size() != static_cast<std::size_t>(c.weight.size()) ||
          b.values.size() != static_cast<std::size_t>(c.bias.size()))
        throw FormatError("tensor shape mismatch for layer " + c.name);
      for (Eigen::Index j = 0; j < c.weight.size(); ++j) c.weight.data()[j] = static_cast<T>(w.values[j]);
      for (Eigen::Index j = 0; j < c.bias.size(); ++j) c.bias[j] = static_cast<T>(b.values[j]);
    }
    return net;
  }

  void save(const std::string& path) const {
    detail::write_file(path, encode_tensor_bundle(to_tensors()));
  }

  static ToyUNet load(const std::string& path) {
    return from_tensors(decode_tensor_bundle(detail::read_file(path), path));
  }

 private:
  int dec_index(int level) const { return 2 * levels() - level; }

  void add_conv(std::string name, int in, int out, int k) {
    Conv c{std::move(name), in, out, k, Mat::Zero(out, static_cast<Eigen::Index>(in) * k * k),
           Vec::Zero(out)};
    convs_.push_back(std::move(c));
  }

  void apply_conv(int idx, const Fmap& in, bool activate, bool keep_cols,
                  typename Pass::Node& node) const {
    const Conv& conv = convs_[idx];
    Mat cols = toy::im2col(in, conv.k);
    node.z = conv.weight * cols;
    node.z.colwise() += conv.bias;
    node.output.h = in.h;
    node.output.w = in.w;
    if (activate) {
      node.output.data = node.z.unaryExpr([](T v) { return v * toy::sigmoid(v); });
    } else {
      node.output.data = node.z;
    }
    node.input = in;
    if (keep_cols) node.cols = std::move(cols);
  }

  Mat conv_backward(int idx, const typename Pass::Node& node, const Mat& dout, bool activated,
                    Gradients* grads, bool need_input) const {
    const Conv& conv = convs_[idx];
    Mat dz;
    if (activated) {
      dz = dout.cwiseProduct(node.z.unaryExpr([](T v) {
        const T s = toy::sigmoid(v);
        return s * (T(1) + v * (T(1) - s));
      }));
    } else {
      dz = dout;
    }
    if (grads) {
      const Mat cols = node.cols.size() ? node.cols : toy::im2col(node.input, conv.k);
      grads->weight[idx].noalias() += dz * cols.transpose();
      grads->bias[idx] += dz.rowwise().sum();
    }
    if (!need_input) return {};
    Mat dcols = conv.weight.transpose() * dz;
    return toy::col2im<T>(dcols, conv.in, node.input.h, node.input.w, conv.k);
  }

  static Mat softmax(const Mat& logits) {
    Mat p(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const T m = logits.col(j).maxCoeff();
      T s = 0;
      for (Eigen::Index c = 0; c < logits.rows(); ++c) {
        p(c, j) = std::exp(logits(c, j) - m);
        s += p(c, j);
      }
      p.col(j) /= s;
    }
    return p;
  }

  ToyModelSpec spec_;
  std::vector<Conv> convs_;
};

/// SegmentationAdapter over a ToyUNet. Forward and vjp are const and share
/// no mutable state, so the adapter is thread safe.
template <typename T>
class ToyAdapter final : public SegmentationAdapter {
 public:
  explicit ToyAdapter(ToyUNet<T> net)
      : net_(std::make_shared<const ToyUNet<T>>(std::move(net))) {}

  int num_classes() const override { return net_->spec().num_classes; }
  Shape3 input_shape() const override { return net_->spec().input; }
  Capabilities capabilities() const override { return {true, true, true}; }
  std::vector<std::string> layer_names() const override { return net_->layer_names(); }
  const ToyUNet<T>& net() const { return *net_; }

 protected:
  ProbabilityMap do_forward(const Image& image) const override {
    const auto pass = net_->run(net_->to_fmap(image), false);
    return to_probability_map(pass.probs, image.height(), image.width());
  }

  Tensor3<double> do_vjp(const Image& image, const Tensor3<double>& cot) const override {
    const auto pass = net_->run(net_->to_fmap(image), false);
    const auto dlogits = ToyUNet<T>::softmax_vjp(pass.probs, to_mat(cot));
    const auto dx = net_->backward(pass, dlogits, nullptr, true);
    Tensor3<double> out(image.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = static_cast<double>(dx.data.data()[i]);
    return out;
  }

  ActivationCapture do_activations(const Image& image, const std::string& layer) const override {
    const int idx = net_->layer_index(layer);
    if (idx < 0) throw CapabilityError("toy model has no layer named '" + layer + "'");
    auto pass = std::make_shared<const typename ToyUNet<T>::Pass>(net_->run(net_->to_fmap(image), false));
    const auto& a = pass->nodes[idx].output;
    ActivationCapture capture;
    capture.activations = from_mat(a.data, a.h, a.w);
    capture.gradient = [net = net_, pass, idx](const Tensor3<double>& cot) {
      const auto dlogits = ToyUNet<T>::softmax_vjp(pass->probs, to_mat(cot));
      std::vector<typename ToyUNet<T>::Mat> layer_grads;
      net->backward(*pass, dlogits, nullptr, false, &layer_grads);
      const auto& o = pass->nodes[idx].output;
      return from_mat(layer_grads[idx], o.h, o.w);
    };
    return capture;
  }

 private:
  static typename ToyUNet<T>::Mat to_mat(const Tensor3<double>& t) {
    typename ToyUNet<T>::Mat m(t.channels(), t.plane_size());
    for (std::size_t i = 0; i < t.size(); ++i) m.data()[i] = static_cast<T>(t.data()[i]);
    return m;
  }

  static Tensor3<double> from_mat(const typename ToyUNet<T>::Mat& m, int h, int w) {
    Tensor3<double> t(static_cast<int>(m.rows()), h, w);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(m.data()[i]);
    return t;
  }

  static ProbabilityMap to_probability_map(const typename ToyUNet<T>::Mat& probs, int h, int w) {
    ProbabilityMap out(static_cast<int>(probs.rows()), h, w);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = static_cast<double>(probs.data()[i]);
    return out;
  }

  std::shared_ptr<const ToyUNet<T>> net_;
};

struct TrainingExample {
  Image image;
  Grid<int> labels;
};

struct TrainConfig {
  int epochs = 20;
  double lr = 2e-3;
  int batch_size = 8;
  double foreground_weight = 2.0;  // loss weight of every non-background class
  std::uint64_t seed = 0;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct TrainReport {
  std::vector<double> epoch_loss;
};

/// Weighted per-pixel cross-entropy; returns the loss and writes dloss/dlogits.
template <typename T>
double cross_entropy(const toy::Mat<T>& probs, const Grid<int>& labels, double fg_weight,
                     toy::Mat<T>& dlogits) {
  dlogits = probs;
  double total_w = 0.0, loss = 0.0;
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    const double w = y == 0 ? 1.0 : fg_weight;
    total_w += w;
    loss -= w * std::log(std::max<double>(probs(y, j), 1e-12));
    dlogits(y, j) -= T(1);
    dlogits.col(j) *= static_cast<T>(w);
  }
  dlogits /= static_cast<T>(total_w);
  return loss / total_w;
}

/// Minibatch Adam on the weighted cross-entropy. Deterministic for a fixed
/// spec seed and config seed.
template <typename T>
ToyUNet<T> train_toy_unet(const ToyModelSpec& spec, const std::vector<TrainingExample>& data,
                          const TrainConfig& cfg, TrainReport* report = nullptr) {
  if (data.empty()) throw ConfigError("training set is empty");
  for (const auto& ex : data) {
    if (ex.image.shape() != spec.input)
      throw InputShapeError("training image shape " + ex.image.shape().str() +
                            " does not match model input " + spec.input.str());
    if (ex.labels.dims() != Size2{spec.input.height, spec.input.width})
      throw InputShapeError("label map shape does not match model input");
  }
  ToyUNet<T> net(spec);
  auto m = net.zero_gradients();
  auto v = net.zero_gradients();
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(cfg.seed ^ 0x5DEECE66DULL);
  const int batch = std::max(1, cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, i - 1))]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      auto g = net.zero_gradients();
      for (std::size_t b = start; b < end; ++b) {
        const auto& ex = data[order[b]];
        const auto pass = net.run(net.to_fmap(ex.image), true);
        toy::Mat<T> dlogits;
        const double loss = cross_entropy<T>(pass.probs, ex.labels, cfg.foreground_weight, dlogits);
        if (!std::isfinite(loss)) throw TrainingDivergedError("loss became non-finite");
        epoch_loss += loss;
        dlogits /= static_cast<T>(end - start);
        net.backward(pass, dlogits, &g, false);
      }
      ++step;
      const double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
      for (std::size_t k = 0; k < net.convs().size(); ++k) {
        auto update = [&](auto& param, auto& grad, auto& mm, auto& vv) {
          mm = T(b1) * mm + T(1 - b1) * grad;
          vv = T(b2) * vv + T(1 - b2) * grad.cwiseProduct(grad);
          const T lr = static_cast<T>(cfg.lr);
          param.array() -= lr * (mm.array() / T(c1)) / ((vv.array() / T(c2)).sqrt() + T(eps));
        };
        update(net.convs()[k].weight, g.weight[k], m.weight[k], v.weight[k]);
        update(net.convs()[k].bias, g.bias[k], m.bias[k], v.bias[k]);
      }
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) throw TrainingDivergedError("loss became non-finite");
    if (report) report->epoch_loss.push_back(epoch_loss);
    if (cfg.on_epoch) cfg.on_epoch(epoch, epoch_loss);
  }
  return net;
}

/// Trains the reference model and wraps it as an adapter (float internals).
inline std::unique_ptr<SegmentationAdapter> train_toy_model(
    const ToyModelSpec& spec, const std::vector<TrainingExample>& data, int epochs, double lr,
    TrainReport* report = nullptr) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.seed = spec.seed;
  return std::make_unique<ToyAdapter<float>>(train_toy_unet<float>(spec, data, cfg, report));
}

/// Registers the "toy" adapter; params: "model" (MISU-M path), optional
/// "precision" = "float" (default) or "double".
inline void register_toy_adapter(AdapterRegistry& registry) {
  registry.add("toy", [](const AdapterParams& params) -> std::unique_ptr<SegmentationAdapter> {
    auto it = params.find("model");
    if (it == params.end() || it->second.empty())
      throw ConfigError("toy adapter requires a model path");
    auto prec = params.find("precision");
    if (prec != params.end() && prec->second == "double")
      return std::make_unique<ToyAdapter<double>>(ToyUNet<double>::load(it->second));
    return std::make_unique<ToyAdapter<float>>(ToyUNet<float>::load(it->second));
  });
}

}  // namespace misure

#endif  // MISURE_TOY_MODEL_HPP
