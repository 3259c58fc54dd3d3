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

// Raster types shared by every stage: planar 3-D tensors ([channel][y][x])
// and single-channel 2-D grids, both dense and row-major.

#ifndef MISURE_TENSOR_HPP
#define MISURE_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "misure/errors.hpp"

namespace misure {

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool operator==(const Shape3&) const = default;

  std::string str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
  }
};

struct Size2 {
  int height = 0;
  int width = 0;

  std::size_t area() const { return static_cast<std::size_t>(height) * width; }
  bool operator==(const Size2&) const = default;
};

template <typename T>
class Tensor3 {
 public:
  using value_type = T;

  Tensor3() = default;
  explicit Tensor3(Shape3 shape, T fill = T{})
      : shape_(shape), data_(shape.size(), fill) {
    if (shape.channels < 1 || shape.height < 1 || shape.width < 1)
      throw ShapeError("tensor dimensions must be >= 1, got " + shape.str());
  }
  Tensor3(int channels, int height, int width, T fill = T{})
      : Tensor3(Shape3{channels, height, width}, fill) {}

  const Shape3& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(shape_.height) * shape_.width;
  }

  T& operator()(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }
  const T& operator()(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }

  std::span<T> plane(int c) {
    return {data_.data() + static_cast<std::size_t>(c) * plane_size(), plane_size()};
  }
  std::span<const T> plane(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * plane_size(), plane_size()};
  }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool operator==(const Tensor3&) const = default;

 private:
  Shape3 shape_;
  std::vector<T> data_;
};

template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : size_{height, width}, data_(size_.area(), fill) {
    if (height < 1 || width < 1)
      throw ShapeError("grid dimensions must be >= 1, got " +
                       std::to_string(height) + "x" + std::to_string(width));
  }
  explicit Grid(Size2 size, T fill = T{}) : Grid(size.height, size.width, fill) {}

  Size2 dims() const { return size_; }
  int height() const { return size_.height; }
  int width() const { return size_.width; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int y, int x) {
    return data_[static_cast<std::size_t>(y) * size_.width + x];
  }
  const T& operator()(int y, int x) const {
    return data_[static_cast<std::size_t>(y) * size_.width + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  Size2 size_;
  std::vector<T> data_;
};

/// Intensity image, [C][H][W], values in [0,1].
class Image : public Tensor3<double> {
 public:
  using Tensor3<double>::Tensor3;
  Image(Tensor3<double> t) : Tensor3<double>(std::move(t)) {}
};

/// Per-pixel class probabilities, [L][H][W].
class ProbabilityMap : public Tensor3<double> {
 public:
  using Tensor3<double>::Tensor3;
  ProbabilityMap(Tensor3<double> t) : Tensor3<double>(std::move(t)) {}
  int num_classes() const { return channels(); }
};

/// 0/1 raster.
class BinaryMask : public Grid<std::uint8_t> {
 public:
  using Grid<std::uint8_t>::Grid;
  std::size_t count() const {
    return static_cast<std::size_t>(
        std::count_if(values().begin(), values().end(), [](auto v) { return v != 0; }));
  }
  bool empty_support() const { return count() == 0; }
};

/// Real-valued mask in [0,1]; its native size may differ from the image size.
class ContinuousMask : public Grid<double> {
 public:
  using Grid<double>::Grid;
  std::size_t nonzero() const {
    return static_cast<std::size_t>(
        std::count_if(values().begin(), values().end(), [](double v) { return v != 0.0; }));
  }
};

inline ContinuousMask to_continuous(const BinaryMask& m) {
  ContinuousMask out(m.dims());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 1.0 : 0.0;
  return out;
}

inline BinaryMask support_of(const ContinuousMask& m) {
  BinaryMask out(m.dims());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] != 0.0 ? 1 : 0;
  return out;
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

inline void check_image(const Image& img) {
  for (double v : img.values())
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw ShapeError("image values must be finite and within [0,1]");
}

}  // namespace misure

#endif  // MISURE_TENSOR_HPP
