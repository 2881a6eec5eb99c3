/* Copyright 2026 The tisr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <array>
#include <string>
#include <string_view>

#include "tisr/image.hpp"
#include "tisr/metrics.hpp"
#include "tisr/prng.hpp"

namespace tisr {

enum class ShapeKind { Square, Circle, Triangle };

inline constexpr std::array<ShapeKind, 3> kShapes{ShapeKind::Square, ShapeKind::Circle, ShapeKind::Triangle};

inline std::string_view shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::Square: return "square";
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Triangle: return "triangle";
  }
  return "?";
}

inline ShapeKind parse_shape(std::string_view name) {
  for (auto s : kShapes)
    if (shape_name(s) == name) return s;
  throw InputError("unknown shape '" + std::string(name) + "'");
}

struct PaletteColor {
  std::string_view name;
  Rgb rgb;
};

/// Fixed palette. Every channel stays inside (0.05, 0.95) so the bounded
/// generator output can reach it.
inline constexpr std::array<PaletteColor, 8> kPalette{{
    {"red", {0.85, 0.15, 0.15}},
    {"green", {0.15, 0.75, 0.20}},
    {"blue", {0.15, 0.25, 0.85}},
    {"yellow", {0.90, 0.85, 0.20}},
    {"purple", {0.60, 0.20, 0.75}},
    {"orange", {0.95, 0.55, 0.10}},
    {"white", {0.92, 0.92, 0.92}},
    {"black", {0.08, 0.08, 0.08}},
}};

inline std::size_t palette_index(std::string_view name) {
  for (std::size_t i = 0; i < kPalette.size(); ++i)
    if (kPalette[i].name == name) return i;
  throw InputError("unknown color '" + std::string(name) + "'");
}

inline const Rgb& palette_rgb(std::string_view name) { return kPalette[palette_index(name)].rgb; }

/// One synthetic scene: a filled shape on a flat background. Geometry is in
/// normalized [0, 1] coordinates, y pointing down.
struct SceneSpec {
  ShapeKind shape = ShapeKind::Square;
  std::string color;
  std::string background;
  double cx = 0.5, cy = 0.5;
  double half = 0.25;  // half the side / radius / half the base

  std::string caption() const {
    return "a " + color + " " + std::string(shape_name(shape)) + " on a " + background + " background";
  }

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    switch (shape) {
      case ShapeKind::Square: return std::abs(dx) <= half && std::abs(dy) <= half;
      case ShapeKind::Circle: return dx * dx + dy * dy <= half * half;
      case ShapeKind::Triangle: {
        // Apex at the top, base along the bottom edge of the box.
        if (dy < -half || dy > half) return false;
        return std::abs(dx) <= (dy + half) / 2.0;
      }
    }
    return false;
  }

  /// Pixel bounding box of the object in a size x size render.
  BBox bbox(std::size_t size) const {
    const double s = static_cast<double>(size);
    auto lo = [&](double v) { return static_cast<std::size_t>(std::clamp(std::floor(v * s), 0.0, s - 1)); };
    auto hi = [&](double v) { return static_cast<std::size_t>(std::clamp(std::ceil(v * s), 1.0, s)); };
    return {lo(cx - half), lo(cy - half), hi(cx + half), hi(cy + half)};
  }
};

/// Random scene: shape, fill and a distinct background drawn uniformly;
/// half-extent in [0.18, 0.32]; object kept at least 0.02 from the border.
inline SceneSpec random_scene(Prng& rng) {
  SceneSpec s;
  s.shape = kShapes[rng.below(kShapes.size())];
  const std::size_t fill = rng.below(kPalette.size());
  std::size_t bg = rng.below(kPalette.size() - 1);
  if (bg >= fill) ++bg;
  s.color = kPalette[fill].name;
  s.background = kPalette[bg].name;
  s.half = rng.uniform(0.18, 0.32);
  s.cx = rng.uniform(s.half + 0.02, 1.0 - s.half - 0.02);
  s.cy = rng.uniform(s.half + 0.02, 1.0 - s.half - 0.02);
  return s;
}

/// Renders with 4x4 supersampling per pixel (coverage-weighted antialiasing).
inline ImageBuffer render_scene(const SceneSpec& s, std::size_t size) {
  const Rgb& fg = palette_rgb(s.color);
  const Rgb& bg = palette_rgb(s.background);
  ImageBuffer img(size, size);
  constexpr int kSub = 4;
  const double inv = 1.0 / static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = (static_cast<double>(x) + (sx + 0.5) / kSub) * inv;
          const double py = (static_cast<double>(y) + (sy + 0.5) / kSub) * inv;
          hits += s.contains(px, py);
        }
      const double a = hits / double(kSub * kSub);
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = a * fg[c] + (1 - a) * bg[c];
    }
  return img;
}

inline constexpr std::size_t kSceneRenderSize = 256;

/// gen_scene: a 256x256 render and its spec.
inline std::pair<ImageBuffer, SceneSpec> gen_scene(Prng& rng) {
  auto spec = random_scene(rng);
  return {render_scene(spec, kSceneRenderSize), spec};
}

/// Mean color over pixels whose centre lies inside the object.
inline Rgb object_mean_color(const ImageBuffer& img, const SceneSpec& s) {
  Rgb sum{0, 0, 0};
  std::size_t n = 0;
  const double inv_h = 1.0 / static_cast<double>(img.height()), inv_w = 1.0 / static_cast<double>(img.width());
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) {
      if (!s.contains((static_cast<double>(x) + 0.5) * inv_w, (static_cast<double>(y) + 0.5) * inv_h)) continue;
      for (std::size_t c = 0; c < 3; ++c) sum[c] += img.at(c, y, x);
      ++n;
    }
  if (n == 0) throw InputError("object_mean_color: object covers no pixel centres");
  for (auto& v : sum) v /= static_cast<double>(n);
  return sum;
}

/// Swaps the fill-color word in a templated caption.
inline std::string with_color(const SceneSpec& s, std::string_view color) {
  SceneSpec t = s;
  t.color = std::string(color);
  return t.caption();
}

}  // namespace tisr
