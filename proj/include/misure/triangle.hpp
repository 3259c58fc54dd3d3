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

// Triangle dataset: three "member" objects whose centers form an
// approximately equilateral triangle (longest side <= 1.15 x shortest side)
// plus 0..3 distractors placed so that no triple involving a distractor meets
// the same criterion. The ground truth is the union of the member footprints.
//
// All geometry is integer-only and all randomness comes from SplitMix64
// streams keyed by (seed, sample index), so a seed reproduces the dataset
// bit for bit on any platform.

#ifndef MISURE_TRIANGLE_HPP
#define MISURE_TRIANGLE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "misure/container.hpp"
#include "misure/errors.hpp"
#include "misure/png_io.hpp"
#include "misure/rng.hpp"
#include "misure/tensor.hpp"

namespace misure {

enum class ShapeKind { kSquare, kDisk, kTriangle, kGlyph };

inline const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kDisk: return "disk";
    case ShapeKind::kTriangle: return "triangle";
    case ShapeKind::kGlyph: return "glyph";
  }
  return "?";
}

inline ShapeKind shape_kind_from(const std::string& s) {
  if (s == "square") return ShapeKind::kSquare;
  if (s == "disk") return ShapeKind::kDisk;
  if (s == "triangle") return ShapeKind::kTriangle;
  if (s == "glyph") return ShapeKind::kGlyph;
  throw FormatError("unknown shape kind '" + s + "'");
}

struct PlacedObject {
  int cy = 0, cx = 0;
  int size = 0;
  ShapeKind kind = ShapeKind::kSquare;
  int intensity = 255;
  bool member = false;
  int glyph = -1;

  int top() const { return cy - size / 2; }
  int left() const { return cx - size / 2; }
  bool operator==(const PlacedObject&) const = default;
};

struct TriangleMeta {
  std::vector<PlacedObject> objects;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  std::string source = "geometric";
  bool operator==(const TriangleMeta&) const = default;
};

struct TriangleSample {
  Image image;
  BinaryMask gt_mask;
  TriangleMeta meta;
};

struct DatasetSplit {
  std::vector<TriangleSample> train;
  std::vector<TriangleSample> val;
};

struct TriangleOptions {
  int n = 64;
  int image_size = 64;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  int min_size = 8, max_size = 14;     // object edge length (geometric shapes)
  int min_side = 20, max_side = 36;    // member triangle side length
  int max_distractors = 3;
  std::string fashion_mnist_dir;       // empty: geometric shapes
  int max_attempts = 1000;

  /// Desk-scale 64x64 variant with 8-14 px shapes.
  static TriangleOptions tiny(int n, std::uint64_t seed) {
    TriangleOptions o;
    o.n = n;
    o.seed = seed;
    return o;
  }

  /// Full-size 128x128 variant.
  static TriangleOptions full(int n, std::uint64_t seed) {
    TriangleOptions o;
    o.n = n;
    o.seed = seed;
    o.image_size = 128;
    o.min_size = 16;
    o.max_size = 28;
    o.min_side = 40;
    o.max_side = 72;
    return o;
  }
};

/// 28x28 grayscale objects read from an IDX3 image file.
struct GlyphSet {
  int rows = 0, cols = 0;
  std::vector<std::vector<std::uint8_t>> glyphs;

  static GlyphSet load_idx(const std::string& path, std::size_t limit = 10000) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataSourceError("cannot open IDX file " + path);
    auto be32 = [&]() {
      unsigned char b[4];
      if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataSourceError(path + ": truncated IDX header");
      return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
    };
    if (be32() != 0x00000803) throw DataSourceError(path + ": not an IDX3 ubyte file");
    const auto n = be32();
    GlyphSet set;
    set.rows = static_cast<int>(be32());
    set.cols = static_cast<int>(be32());
    const std::size_t count = std::min<std::size_t>(n, limit);
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<std::uint8_t> g(static_cast<std::size_t>(set.rows) * set.cols);
      if (!in.read(reinterpret_cast<char*>(g.data()), static_cast<std::streamsize>(g.size())))
        throw DataSourceError(path + ": truncated IDX payload");
      set.glyphs.push_back(std::move(g));
    }
    if (set.glyphs.empty()) throw DataSourceError(path + ": no images");
    return set;
  }

  /// Looks for the standard Fashion-MNIST training images in `dir`.
  static GlyphSet load_dir(const std::string& dir) {
    for (const char* name : {"train-images-idx3-ubyte", "t10k-images-idx3-ubyte"}) {
      const auto p = std::filesystem::path(dir) / name;
      if (std::filesystem::exists(p)) return load_idx(p.string());
    }
    throw DataSourceError("no Fashion-MNIST IDX files in '" + dir + "'");
  }
};

namespace triangle {

inline std::int64_t dist2(const PlacedObject& a, const PlacedObject& b) {
  const std::int64_t dy = a.cy - b.cy, dx = a.cx - b.cx;
  return dy * dy + dx * dx;
}

/// Longest side <= 1.15 x shortest side, in exact integer arithmetic on
/// squared lengths: max^2 * 10000 <= 13225 * min^2.
inline bool is_near_equilateral(const PlacedObject& a, const PlacedObject& b,
                                const PlacedObject& c) {
  const std::array<std::int64_t, 3> s{dist2(a, b), dist2(b, c), dist2(a, c)};
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  if (*lo == 0) return false;
  return *hi * 10000 <= 13225 * *lo;
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline std::int64_t isqrt(std::int64_t n) {
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

inline bool inside(const PlacedObject& o, int image_size) {
  return o.top() >= 0 && o.left() >= 0 && o.top() + o.size <= image_size &&
         o.left() + o.size <= image_size;
}

/// Bounding boxes separated by a gap of at least 2 px along some axis.
inline bool separated(const PlacedObject& a, const PlacedObject& b) {
  constexpr int gap = 2;
  const bool sep_y = a.top() + a.size + gap <= b.top() || b.top() + b.size + gap <= a.top();
  const bool sep_x = a.left() + a.size + gap <= b.left() || b.left() + b.size + gap <= a.left();
  return sep_y || sep_x;
}

/// Calls fn(y, x, value) for every footprint pixel, value in 0..255.
template <typename Fn>
void for_each_pixel(const PlacedObject& o, const GlyphSet* glyphs, Fn&& fn) {
  const int s = o.size;
  for (int r = 0; r < s; ++r)
    for (int u = 0; u < s; ++u) {
      int value = 0;
      switch (o.kind) {
        case ShapeKind::kSquare: value = o.intensity; break;
        case ShapeKind::kDisk: {
          const int a = 2 * r + 1 - s, b = 2 * u + 1 - s;
          value = a * a + b * b <= s * s ? o.intensity : 0;
          break;
        }
        case ShapeKind::kTriangle: value = std::abs(2 * u + 1 - s) <= r + 1 ? o.intensity : 0; break;
        case ShapeKind::kGlyph:
          if (!glyphs || o.glyph < 0 || o.glyph >= static_cast<int>(glyphs->glyphs.size()))
            throw DataSourceError("glyph object without a matching glyph set");
          value = glyphs->glyphs[o.glyph][static_cast<std::size_t>(r) * glyphs->cols + u];
          break;
      }
      if (value > 0) fn(o.top() + r, o.left() + u, value);
    }
}

inline void render(const TriangleMeta& meta, int image_size, const GlyphSet* glyphs,
                   Image& image, BinaryMask& gt) {
  image = Image(1, image_size, image_size, 0.0);
  gt = BinaryMask(image_size, image_size, 0);
  for (const auto& o : meta.objects)
    for_each_pixel(o, glyphs, [&](int y, int x, int v) {
      image(0, y, x) = v / 255.0;
      if (o.member) gt(y, x) = 1;
    });
}

}  // namespace triangle

/// Checks the member geometry, distractor rejection, and (when the glyph
/// set is available or not needed) that gt_mask is the union of the member
/// footprints. Returns an empty string when the sample is valid.
inline std::string validate_sample(const TriangleSample& s, const GlyphSet* glyphs = nullptr) {
  std::vector<const PlacedObject*> members, all;
  for (const auto& o : s.meta.objects) {
    all.push_back(&o);
    if (o.member) members.push_back(&o);
  }
  if (members.size() != 3) return "expected 3 member objects, got " + std::to_string(members.size());
  if (!triangle::is_near_equilateral(*members[0], *members[1], *members[2]))
    return "member centers are not within the equilateral tolerance";
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j)
      for (std::size_t k = j + 1; k < all.size(); ++k) {
        if (all[i]->member && all[j]->member && all[k]->member) continue;
        if (triangle::is_near_equilateral(*all[i], *all[j], *all[k]))
          return "a triple with a distractor meets the member criterion";
      }
  const bool need_glyphs = std::any_of(all.begin(), all.end(),
                                       [](auto* o) { return o->kind == ShapeKind::kGlyph; });
  if (!need_glyphs || glyphs) {
    Image img;
    BinaryMask gt;
    triangle::render(s.meta, s.gt_mask.height(), glyphs, img, gt);
    if (!(gt == s.gt_mask)) return "gt_mask differs from the union of member footprints";
  }
  if (s.gt_mask.empty_support()) return "empty gt_mask";
  return {};
}

/// Generates sample `index`; throws PlacementError after max_attempts.
inline TriangleSample generate_sample(const TriangleOptions& opt, std::uint64_t index,
                                      const GlyphSet* glyphs = nullptr) {
  auto rng = SplitMix64::stream(opt.seed, index);
  const int n_distract = static_cast<int>(rng.uniform_int(0, opt.max_distractors));
  const int img = opt.image_size;

  auto random_object = [&](bool member) {
    PlacedObject o;
    o.member = member;
    if (glyphs) {
      o.kind = ShapeKind::kGlyph;
      o.size = glyphs->rows;
      o.glyph = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(glyphs->glyphs.size()) - 1));
      o.intensity = 255;
    } else {
      o.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
      o.size = static_cast<int>(rng.uniform_int(opt.min_size, opt.max_size));
      o.intensity = static_cast<int>(rng.uniform_int(100, 255));
    }
    return o;
  };

  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    std::vector<PlacedObject> objs;
    // Members: A random, B at distance ~d, C the rounded apex of the
    // equilateral triangle on AB (sqrt(3)/2 ~ 866/1000).
    PlacedObject a = random_object(true), b = random_object(true), c = random_object(true);
    const std::int64_t d = rng.uniform_int(opt.min_side, opt.max_side);
    const std::int64_t vx = rng.uniform_int(-d, d);
    const std::int64_t vy = triangle::isqrt(d * d - vx * vx) * (rng.bernoulli(0.5) ? 1 : -1);
    const std::int64_t sgn = rng.bernoulli(0.5) ? 1 : -1;
    a.cy = static_cast<int>(rng.uniform_int(0, img - 1));
    a.cx = static_cast<int>(rng.uniform_int(0, img - 1));
    b.cy = static_cast<int>(a.cy + vy);
    b.cx = static_cast<int>(a.cx + vx);
    c.cy = static_cast<int>(triangle::floor_div(2000 * a.cy + 1000 * vy - sgn * 1732 * vx + 1000, 2000));
    c.cx = static_cast<int>(triangle::floor_div(2000 * a.cx + 1000 * vx + sgn * 1732 * vy + 1000, 2000));
    objs = {a, b, c};
    bool ok = std::all_of(objs.begin(), objs.end(), [&](auto& o) { return triangle::inside(o, img); }) &&
              triangle::separated(a, b) && triangle::separated(b, c) && triangle::separated(a, c) &&
              triangle::is_near_equilateral(a, b, c);
    if (!ok) continue;

    for (int k = 0; k < n_distract && ok; ++k) {
      bool placed = false;
      for (int tries = 0; tries < 100 && !placed; ++tries) {
        PlacedObject o = random_object(false);
        o.cy = static_cast<int>(rng.uniform_int(0, img - 1));
        o.cx = static_cast<int>(rng.uniform_int(0, img - 1));
        if (!triangle::inside(o, img)) continue;
        bool good = true;
        for (std::size_t i = 0; i < objs.size() && good; ++i) good = triangle::separated(o, objs[i]);
        for (std::size_t i = 0; i < objs.size() && good; ++i)
          for (std::size_t j = i + 1; j < objs.size() && good; ++j)
            good = !triangle::is_near_equilateral(o, objs[i], objs[j]);
        if (good) {
          objs.push_back(o);
          placed = true;
        }
      }
      ok = placed;
    }
    if (!ok) continue;

    TriangleSample s;
    s.meta.objects = std::move(objs);
    s.meta.seed = opt.seed;
    s.meta.index = index;
    s.meta.source = glyphs ? "fashion_mnist" : "geometric";
    triangle::render(s.meta, img, glyphs, s.image, s.gt_mask);
    return s;
  }
  throw PlacementError("could not place objects for sample " + std::to_string(index) + " after " +
                       std::to_string(opt.max_attempts) + " attempts");
}

/// Indices of the training split: a seeded shuffle, first round(fraction * n)
/// indices, returned sorted.
inline std::vector<std::uint64_t> train_indices(int n, double fraction, std::uint64_t seed) {
  std::vector<std::uint64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  SplitMix64 rng(seed ^ 0x53504C4954ULL);
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  idx.resize(static_cast<std::size_t>(std::llround(fraction * n)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline DatasetSplit generate_triangle(const TriangleOptions& opt, const GlyphSet* glyphs = nullptr) {
  if (opt.n < 1) throw ConfigError("dataset size must be >= 1");
  if (!(opt.train_fraction >= 0.0 && opt.train_fraction <= 1.0))
    throw ConfigError("train fraction must be in [0,1]");
  GlyphSet loaded;
  if (!glyphs && !opt.fashion_mnist_dir.empty()) {
    loaded = GlyphSet::load_dir(opt.fashion_mnist_dir);
    glyphs = &loaded;
  }
  const auto train = train_indices(opt.n, opt.train_fraction, opt.seed);
  DatasetSplit split;
  std::size_t t = 0;
  for (int i = 0; i < opt.n; ++i) {
    auto s = generate_sample(opt, static_cast<std::uint64_t>(i), glyphs);
    if (t < train.size() && train[t] == static_cast<std::uint64_t>(i)) {
      split.train.push_back(std::move(s));
      ++t;
    } else {
      split.val.push_back(std::move(s));
    }
  }
  return split;
}

inline DatasetSplit generate_triangle_tiny(int n, std::uint64_t seed) {
  return generate_triangle(TriangleOptions::tiny(n, seed));
}

inline nlohmann::json meta_to_json(const TriangleMeta& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["index"] = m.index;
  j["source"] = m.source;
  j["objects"] = nlohmann::json::array();
  for (const auto& o : m.objects)
    j["objects"].push_back({{"cy", o.cy}, {"cx", o.cx}, {"size", o.size},
                            {"kind", to_string(o.kind)}, {"intensity", o.intensity},
                            {"member", o.member}, {"glyph", o.glyph}});
  return j;
}

inline TriangleMeta meta_from_json(const nlohmann::json& j) {
  TriangleMeta m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.index = j.at("index").get<std::uint64_t>();
  m.source = j.at("source").get<std::string>();
  for (const auto& o : j.at("objects")) {
    PlacedObject p;
    p.cy = o.at("cy");
    p.cx = o.at("cx");
    p.size = o.at("size");
    p.kind = shape_kind_from(o.at("kind").get<std::string>());
    p.intensity = o.at("intensity");
    p.member = o.at("member");
    p.glyph = o.at("glyph");
    m.objects.push_back(p);
  }
  return m;
}

/// Writes {stem}.png, {stem}_mask.png and {stem}.json into `dir`.
inline void save_sample(const std::string& dir, const std::string& stem, const TriangleSample& s) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_png((fs::path(dir) / (stem + ".png")).string(), s.image);
  write_mask_png((fs::path(dir) / (stem + "_mask.png")).string(), s.gt_mask);
  std::ofstream out(fs::path(dir) / (stem + ".json"));
  out << meta_to_json(s.meta).dump(2) << "\n";
}

inline TriangleSample load_sample(const std::string& dir, const std::string& stem) {
  namespace fs = std::filesystem;
  TriangleSample s;
  const auto meta_path = (fs::path(dir) / (stem + ".json")).string();
  std::ifstream in(meta_path);
  if (!in) throw FormatError("missing sample metadata " + meta_path);
  try {
    s.meta = meta_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path + ": " + e.what());
  }
  s.image = read_png((fs::path(dir) / (stem + ".png")).string());
  s.gt_mask = read_mask_png((fs::path(dir) / (stem + "_mask.png")).string());
  if (s.gt_mask.dims() != Size2{s.image.height(), s.image.width()})
    throw FormatError(dir + "/" + stem + ": mask and image sizes differ");
  return s;
}

inline constexpr int kDatasetGeneratorVersion = 1;

inline nlohmann::json dataset_manifest(const TriangleOptions& opt, const std::string& kind,
                                       const DatasetSplit& split) {
  return {{"generator", "misure-triangle"},
          {"version", kDatasetGeneratorVersion},
          {"kind", kind},
          {"seed", opt.seed},
          {"n", opt.n},
          {"image_size", opt.image_size},
          {"train_fraction", opt.train_fraction},
          {"source", opt.fashion_mnist_dir.empty() ? "geometric" : "fashion_mnist"},
          {"counts", {{"train", split.train.size()}, {"val", split.val.size()}}}};
}

/// Layout: {out}/manifest.json, {out}/{train,val}/{index}.png,
/// {index}_mask.png, {index}.json.
inline void save_dataset(const std::string& out, const TriangleOptions& opt,
                         const std::string& kind, const DatasetSplit& split) {
  namespace fs = std::filesystem;
  fs::create_directories(out);
  for (const auto& s : split.train)
    save_sample((fs::path(out) / "train").string(), std::to_string(s.meta.index), s);
  for (const auto& s : split.val)
    save_sample((fs::path(out) / "val").string(), std::to_string(s.meta.index), s);
  std::ofstream(fs::path(out) / "manifest.json") << dataset_manifest(opt, kind, split).dump(2) << "\n";
}

struct DatasetEntry {
  std::string id;  // "{split}/{index}"
  TriangleSample sample;
};

/// Sample indices present in one split directory, ascending.
inline std::vector<std::uint64_t> list_split(const std::string& root, const std::string& split) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(root) / split;
  if (!fs::is_directory(dir)) throw DataSourceError("no split directory " + dir.string());
  std::vector<std::uint64_t> indices;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto stem = e.path().stem().string();
    if (e.path().extension() == ".json" && !stem.empty() &&
        std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; }))
      indices.push_back(std::stoull(stem));
  }
  std::sort(indices.begin(), indices.end());
  return indices;
}

/// Loads one split of a dataset directory, ordered by numeric index.
inline std::vector<DatasetEntry> load_split(const std::string& root, const std::string& split) {
  const std::string dir = (std::filesystem::path(root) / split).string();
  std::vector<DatasetEntry> out;
  for (auto i : list_split(root, split))
    out.push_back({split + "/" + std::to_string(i), load_sample(dir, std::to_string(i))});
  return out;
}

}  // namespace misure

#endif  // MISURE_TRIANGLE_HPP
