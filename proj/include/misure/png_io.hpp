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

// 8-bit PNG read/write through libpng's simplified API.

#ifndef MISURE_PNG_IO_HPP
#define MISURE_PNG_IO_HPP

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "misure/errors.hpp"
#include "misure/tensor.hpp"

namespace misure {

namespace detail {

inline void write_png_bytes(const std::string& path, int h, int w, int channels,
                            const std::vector<std::uint8_t>& interleaved) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, interleaved.data(), 0, nullptr))
    throw FormatError(path + ": PNG write failed: " + img.message);
}

inline std::vector<std::uint8_t> read_png_bytes(const std::string& path, int& h, int& w,
                                                int& channels) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw FormatError(path + ": not a readable PNG: " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError(path + ": corrupt PNG: " + img.message);
  }
  h = static_cast<int>(img.height);
  w = static_cast<int>(img.width);
  channels = color ? 3 : 1;
  return buf;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

/// Writes a 1- or 3-channel image; values in [0,1] map to 0..255.
inline void write_png(const std::string& path, const Tensor3<double>& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw FormatError("PNG export supports 1 or 3 channels, got " + std::to_string(img.channels()));
  std::vector<std::uint8_t> buf(img.size());
  std::size_t k = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) buf[k++] = detail::to_byte(img(c, y, x));
  detail::write_png_bytes(path, img.height(), img.width(), img.channels(), buf);
}

/// Reads an 8-bit PNG as an image with values byte / 255.
inline Image read_png(const std::string& path) {
  int h = 0, w = 0, c = 0;
  const auto buf = detail::read_png_bytes(path, h, w, c);
  Image img(c, h, w);
  std::size_t k = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) img(ch, y, x) = buf[k++] / 255.0;
  return img;
}

inline void write_mask_png(const std::string& path, const BinaryMask& m) {
  std::vector<std::uint8_t> buf(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) buf[i] = m[i] ? 255 : 0;
  detail::write_png_bytes(path, m.height(), m.width(), 1, buf);
}

inline BinaryMask read_mask_png(const std::string& path) {
  int h = 0, w = 0, c = 0;
  const auto buf = detail::read_png_bytes(path, h, w, c);
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = buf[i * c] > 127 ? 1 : 0;
  return m;
}

/// Min-max scaled grayscale preview of a real-valued map.
inline void write_preview_png(const std::string& path, const Grid<double>& g) {
  const auto [lo, hi] = std::minmax_element(g.values().begin(), g.values().end());
  const double range = *hi - *lo;
  std::vector<std::uint8_t> buf(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    buf[i] = range > 0.0 ? detail::to_byte((g[i] - *lo) / range) : 0;
  detail::write_png_bytes(path, g.height(), g.width(), 1, buf);
}

}  // namespace misure

#endif  // MISURE_PNG_IO_HPP
