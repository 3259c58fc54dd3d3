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

#ifndef MISURE_ADAPTER_HPP
#define MISURE_ADAPTER_HPP

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "misure/errors.hpp"
#include "misure/tensor.hpp"

namespace misure {

struct Capabilities {
  bool vjp = false;
  bool activations = false;
  bool thread_safe = false;
};

/// Intermediate feature maps of one layer plus a hook that maps a cotangent
/// on the output probabilities to the gradient w.r.t. those feature maps.
struct ActivationCapture {
  Tensor3<double> activations;  // [K][h][w]
  std::function<Tensor3<double>(const Tensor3<double>&)> gradient;
};

/// The model boundary. Implementers provide per-pixel softmax outputs and,
/// optionally, vector-Jacobian products w.r.t. the input image.
///
/// forward() and vjp() validate shapes and then dispatch to the protected
/// hooks; implementers override only the hooks.
class SegmentationAdapter {
 public:
  virtual ~SegmentationAdapter() = default;

  virtual int num_classes() const = 0;
  virtual Shape3 input_shape() const = 0;
  virtual Capabilities capabilities() const = 0;
  virtual std::vector<std::string> layer_names() const { return {}; }

  ProbabilityMap forward(const Image& image) const {
    check_input(image);
    return do_forward(image);
  }

  /// Gradient of <cotangent, forward(image)> w.r.t. the image.
  Tensor3<double> vjp(const Image& image, const Tensor3<double>& cotangent) const {
    if (!capabilities().vjp) throw CapabilityError("adapter does not support vjp");
    check_input(image);
    const Shape3 out{num_classes(), image.height(), image.width()};
    if (cotangent.shape() != out)
      throw InputShapeError("cotangent shape " + cotangent.shape().str() + ", expected " +
                            out.str());
    if (!all_finite(cotangent.values())) throw NumericalError("cotangent is not finite");
    return do_vjp(image, cotangent);
  }

  ActivationCapture activations(const Image& image, const std::string& layer) const {
    if (!capabilities().activations)
      throw CapabilityError("adapter does not expose activations");
    check_input(image);
    return do_activations(image, layer);
  }

 protected:
  virtual ProbabilityMap do_forward(const Image& image) const = 0;
  virtual Tensor3<double> do_vjp(const Image&, const Tensor3<double>&) const {
    throw CapabilityError("adapter does not support vjp");
  }
  virtual ActivationCapture do_activations(const Image&, const std::string&) const {
    throw CapabilityError("adapter does not expose activations");
  }

 private:
  void check_input(const Image& image) const {
    if (image.shape() != input_shape())
      throw InputShapeError("image shape " + image.shape().str() + " does not match adapter " +
                            input_shape().str());
  }
};

/// Serializes every call into an adapter that is not thread safe.
class SerializedAdapter final : public SegmentationAdapter {
 public:
  explicit SerializedAdapter(const SegmentationAdapter& inner) : inner_(inner) {}
  explicit SerializedAdapter(std::unique_ptr<SegmentationAdapter> owned)
      : owned_(std::move(owned)), inner_(*owned_) {}

  int num_classes() const override { return inner_.num_classes(); }
  Shape3 input_shape() const override { return inner_.input_shape(); }
  Capabilities capabilities() const override {
    auto caps = inner_.capabilities();
    caps.thread_safe = true;
    return caps;
  }
  std::vector<std::string> layer_names() const override { return inner_.layer_names(); }

 protected:
  ProbabilityMap do_forward(const Image& image) const override {
    std::lock_guard lock(mutex_);
    return inner_.forward(image);
  }
  Tensor3<double> do_vjp(const Image& image, const Tensor3<double>& cot) const override {
    std::lock_guard lock(mutex_);
    return inner_.vjp(image, cot);
  }
  ActivationCapture do_activations(const Image& image, const std::string& layer) const override {
    std::lock_guard lock(mutex_);
    auto capture = inner_.activations(image, layer);
    auto hook = std::move(capture.gradient);
    capture.gradient = [this, hook = std::move(hook)](const Tensor3<double>& cot) {
      std::lock_guard lock(mutex_);
      return hook(cot);
    };
    return capture;
  }

 private:
  std::unique_ptr<SegmentationAdapter> owned_;
  const SegmentationAdapter& inner_;
  mutable std::mutex mutex_;
};

inline double inner_product(const Tensor3<double>& a, const Tensor3<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

/// Central-difference estimate of adapter.vjp(image, cotangent); costs
/// 2*C*H*W forward passes. Works for any adapter with a forward pass.
inline Tensor3<double> finite_difference_vjp(const SegmentationAdapter& adapter,
                                             const Image& image,
                                             const Tensor3<double>& cotangent,
                                             double step = 1e-4) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be > 0");
  Tensor3<double> grad(image.shape(), 0.0);
  Image probe = image;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double x = image.values()[i];
    probe.values()[i] = x + step;
    const double up = inner_product(cotangent, adapter.forward(probe));
    probe.values()[i] = x - step;
    const double down = inner_product(cotangent, adapter.forward(probe));
    probe.values()[i] = x;
    grad.values()[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

using AdapterParams = std::map<std::string, std::string>;
using AdapterFactory =
    std::function<std::unique_ptr<SegmentationAdapter>(const AdapterParams&)>;

/// Name -> factory lookup used by the command-line harness.
class AdapterRegistry {
 public:
  void add(const std::string& name, AdapterFactory factory) {
    factories_[name] = std::move(factory);
  }
  bool contains(const std::string& name) const { return factories_.count(name) != 0; }
  std::unique_ptr<SegmentationAdapter> create(const std::string& name,
                                              const AdapterParams& params) const {
    auto it = factories_.find(name);
    if (it == factories_.end()) throw ConfigError("unknown adapter '" + name + "'");
    return it->second(params);
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : factories_) out.push_back(k);
    return out;
  }

 private:
  std::map<std::string, AdapterFactory> factories_;
};

}  // namespace misure

#endif  // MISURE_ADAPTER_HPP
