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

// Little-endian binary containers.
//
// Float map ("MISU-F"):
//   bytes 0..5   "MISU-F"
//   u32          height
//   u32          width
//   u32          channels
//   f32[h*w*c]   row-major over (y, x, channel), i.e. channels interleaved
//
// Tensor bundle ("MISU-M"):
//   bytes 0..5   "MISU-M"
//   u16          version (currently 1)
//   u32          tensor count
//   per tensor:  u16 name length, name bytes (UTF-8), u8 rank,
//                u32 dims[rank], f32 payload (row-major, product of dims)

#ifndef MISURE_CONTAINER_HPP
#define MISURE_CONTAINER_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "misure/errors.hpp"
#include "misure/tensor.hpp"

namespace misure {

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> bytes, std::string origin)
      : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError(origin_ + ": truncated container");
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = bytes_[pos_] | (bytes_[pos_ + 1] << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail

inline constexpr char kFloatMapMagic[] = "MISU-F";
inline constexpr char kModelMagic[] = "MISU-M";
inline constexpr std::uint16_t kModelVersion = 1;

/// Encodes a planar tensor as a MISU-F float map (channels interleaved on disk).
inline std::vector<std::uint8_t> encode_float_map(const Tensor3<double>& t) {
  detail::ByteWriter w;
  w.raw(kFloatMapMagic, 6);
  w.u32(static_cast<std::uint32_t>(t.height()));
  w.u32(static_cast<std::uint32_t>(t.width()));
  w.u32(static_cast<std::uint32_t>(t.channels()));
  for (int y = 0; y < t.height(); ++y)
    for (int x = 0; x < t.width(); ++x)
      for (int c = 0; c < t.channels(); ++c) w.f32(static_cast<float>(t(c, y, x)));
  return w.bytes();
}

inline Tensor3<double> decode_float_map(std::vector<std::uint8_t> bytes,
                                        const std::string& origin = "float map") {
  detail::ByteReader r(std::move(bytes), origin);
  if (r.str(6) != kFloatMapMagic) throw FormatError(origin + ": bad magic");
  const auto h = r.u32(), w = r.u32(), c = r.u32();
  if (h == 0 || w == 0 || c == 0 || h > (1u << 16) || w > (1u << 16) || c > (1u << 12))
    throw FormatError(origin + ": implausible dimensions");
  Tensor3<double> t(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  r.need(static_cast<std::size_t>(h) * w * c * 4);
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x)
      for (std::uint32_t k = 0; k < c; ++k) t(k, y, x) = r.f32();
  if (!r.at_end()) throw FormatError(origin + ": trailing bytes");
  return t;
}

inline void save_float_map(const std::string& path, const Tensor3<double>& t) {
  detail::write_file(path, encode_float_map(t));
}

inline void save_float_map(const std::string& path, const Grid<double>& g) {
  Tensor3<double> t(1, g.height(), g.width());
  t.values() = g.values();
  save_float_map(path, t);
}

inline Tensor3<double> load_float_map(const std::string& path) {
  return decode_float_map(detail::read_file(path), path);
}

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

inline std::vector<std::uint8_t> encode_tensor_bundle(const std::vector<NamedTensor>& tensors) {
  detail::ByteWriter w;
  w.raw(kModelMagic, 6);
  w.u16(kModelVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    std::size_t n = 1;
    for (auto d : t.dims) n *= d;
    if (n != t.values.size()) throw FormatError("tensor '" + t.name + "' size/shape mismatch");
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.values) w.f32(v);
  }
  return w.bytes();
}

inline std::vector<NamedTensor> decode_tensor_bundle(std::vector<std::uint8_t> bytes,
                                                     const std::string& origin = "model") {
  detail::ByteReader r(std::move(bytes), origin);
  if (r.str(6) != kModelMagic) throw FormatError(origin + ": bad magic");
  const auto version = r.u16();
  if (version != kModelVersion)
    throw FormatError(origin + ": unsupported version " + std::to_string(version));
  const auto count = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.u16());
    const auto rank = r.u8();
    std::size_t n = 1;
    for (int k = 0; k < rank; ++k) {
      t.dims.push_back(r.u32());
      n *= t.dims.back();
    }
    r.need(n * 4);
    t.values.resize(n);
    for (auto& v : t.values) v = r.f32();
    out.push_back(std::move(t));
  }
  if (!r.at_end()) throw FormatError(origin + ": trailing bytes");
  return out;
}

}  // namespace misure

#endif  // MISURE_CONTAINER_HPP
