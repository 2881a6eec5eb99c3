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
#include <cmath>
#include <vector>

#include "tisr/image.hpp"

namespace tisr {

inline constexpr double kPsnrCap = 99.0;

inline void require_same_dims(const ImageBuffer& a, const ImageBuffer& b, const char* op) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

/// 10 log10(1 / MSE) over all channels, capped at 99 dB.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_dims(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.values().size());
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// BT.601 luma.
inline std::vector<double> luminance(const ImageBuffer& img) {
  std::vector<double> y(img.height() * img.width());
  for (std::size_t r = 0; r < img.height(); ++r)
    for (std::size_t c = 0; c < img.width(); ++c)
      y[r * img.width() + c] = 0.299 * img.at(0, r, c) + 0.587 * img.at(1, r, c) + 0.114 * img.at(2, r, c);
  return y;
}

/// Normalized 1-D Gaussian of length 11, sigma 1.5.
inline std::array<double, 11> ssim_gaussian() {
  std::array<double, 11> g{};
  double total = 0;
  for (int i = 0; i < 11; ++i) {
    const double x = i - 5;
    g[i] = std::exp(-x * x / (2 * 1.5 * 1.5));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

/// Mean SSIM over all fully-contained 11x11 windows of the luma channel.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_dims(a, b, "ssim");
  const std::size_t h = a.height(), w = a.width();
  if (h < 11 || w < 11) throw InputError("ssim: images must be at least 11x11");
  const auto ya = luminance(a), yb = luminance(b);
  const auto g = ssim_gaussian();
  const std::size_t oh = h - 10, ow = w - 10;

  // Separable filtering of the five moment images.
  auto filter = [&](auto&& value) {
    std::vector<double> tmp(h * ow), out(oh * ow);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = 0;
        for (std::size_t k = 0; k < 11; ++k) acc += g[k] * value(r * w + c + k);
        tmp[r * ow + c] = acc;
      }
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = 0;
        for (std::size_t k = 0; k < 11; ++k) acc += g[k] * tmp[(r + k) * ow + c];
        out[r * ow + c] = acc;
      }
    return out;
  };
  const auto mu_a = filter([&](std::size_t i) { return ya[i]; });
  const auto mu_b = filter([&](std::size_t i) { return yb[i]; });
  const auto e_aa = filter([&](std::size_t i) { return ya[i] * ya[i]; });
  const auto e_bb = filter([&](std::size_t i) { return yb[i] * yb[i]; });
  const auto e_ab = filter([&](std::size_t i) { return ya[i] * yb[i]; });

  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (std::size_t i = 0; i < oh * ow; ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    total += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(oh * ow);
}

/// Pixel rectangle [x0, x1) x [y0, y1).
struct BBox {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool operator==(const BBox&) const = default;
};

using Rgb = std::array<double, 3>;

inline double rgb_distance(const Rgb& a, const Rgb& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

inline Rgb region_mean_color(const ImageBuffer& img, const BBox& box) {
  if (box.x0 >= box.x1 || box.y0 >= box.y1 || box.x1 > img.width() || box.y1 > img.height()) {
    throw InputError("region_mean_color: box [" + std::to_string(box.x0) + "," + std::to_string(box.x1) + ")x[" +
                     std::to_string(box.y0) + "," + std::to_string(box.y1) + ") outside " +
                     std::to_string(img.width()) + "x" + std::to_string(img.height()) + " image");
  }
  Rgb sum{0, 0, 0};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = box.y0; y < box.y1; ++y)
      for (std::size_t x = box.x0; x < box.x1; ++x) sum[c] += img.at(c, y, x);
  const double n = static_cast<double>((box.x1 - box.x0) * (box.y1 - box.y0));
  for (auto& v : sum) v /= n;
  return sum;
}

}  // namespace tisr
