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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tisr/io.hpp"
#include "tisr/tensor.hpp"

namespace tisr {

/// RGB image with values in [0, 1], stored planar as [3][height][width].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(std::size_t height, std::size_t width, double fill = 0.0)
      : height_(height), width_(width), data_(3 * height * width, fill) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * height_ + y) * width_ + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  void clamp() {
    for (auto& v : data_) v = std::clamp(v, 0.0, 1.0);
  }

  bool operator==(const ImageBuffer&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Round-trips every value through 8-bit storage.
inline ImageBuffer quantized(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (auto& v : out.values()) v = quantize(v) / 255.0;
  return out;
}

/// Binary P6 encoding, maxval 255, interleaved RGB rows.
inline std::string encode_ppm(const ImageBuffer& img) {
  std::string bytes = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  bytes.reserve(bytes.size() + 3 * img.width() * img.height());
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      for (std::size_t c = 0; c < 3; ++c) bytes.push_back(static_cast<char>(quantize(img.at(c, y, x))));
  return bytes;
}

namespace detail {

class PpmReader {
 public:
  explicit PpmReader(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (1u << 24)) throw ParseError(std::string("PPM ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("PPM: expected ") + what, start);
    return value;
  }

  std::size_t pos_ = 0;
  std::string_view bytes_;
};

}  // namespace detail

/// Parses a P6 file. Throws ParseError (with the failing byte offset) on any
/// malformation; nothing is returned on failure.
inline ImageBuffer decode_ppm(std::string_view bytes) {
  detail::PpmReader r(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw ParseError("PPM: missing P6 magic", 0);
  r.pos_ = 2;
  const std::size_t width = r.number("width");
  const std::size_t height = r.number("height");
  r.skip_space_and_comments();
  const std::size_t maxval_at = r.pos_;
  const std::size_t maxval = r.number("maxval");
  if (width == 0 || height == 0) throw ParseError("PPM: zero image dimension", maxval_at);
  if (maxval == 0 || maxval > 255) throw ParseError("PPM: maxval must be in [1, 255]", maxval_at);
  if (r.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos_]))) {
    throw ParseError("PPM: expected single whitespace after maxval", r.pos_);
  }
  ++r.pos_;
  const std::size_t need = 3 * width * height;
  if (bytes.size() - r.pos_ < need) {
    throw ParseError("PPM: truncated pixel data (" + std::to_string(bytes.size() - r.pos_) + " of " +
                         std::to_string(need) + " bytes)",
                     bytes.size());
  }
  ImageBuffer img(height, width);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + r.pos_);
  const auto denom = static_cast<double>(maxval);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const unsigned v = *p++;
        if (v > maxval) throw ParseError("PPM: sample exceeds maxval", r.pos_ + 3 * (y * width + x) + c);
        img.at(c, y, x) = v / denom;
      }
  return img;
}

inline ImageBuffer read_image(const fs::path& path) { return decode_ppm(read_file(path)); }

inline void write_image(const fs::path& path, const ImageBuffer& img) { write_file_atomic(path, encode_ppm(img)); }

/// Keys cubic kernel with a = -0.5.
inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1) return ((a + 2) * x - (a + 3)) * x * x + 1;
  if (x < 2) return ((a * x - 5 * a) * x + 8 * a) * x - 4 * a;
  return 0;
}

/// Sparse 1-D resampling weights: for each output index, (source index, weight)
/// pairs with edge clamping folded in. Downscaling stretches the kernel by the
/// scale factor (antialiasing).
struct ResampleTaps {
  std::vector<std::vector<std::pair<std::size_t, double>>> taps;
};

inline ResampleTaps resample_taps(std::size_t in, std::size_t out) {
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double stretch = std::max(1.0, scale);
  const double support = 2.0 * stretch;
  ResampleTaps r;
  r.taps.resize(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * scale - 0.5;
    const auto lo = static_cast<long>(std::floor(center - support));
    const auto hi = static_cast<long>(std::ceil(center + support));
    std::vector<double> w(in, 0.0);
    double total = 0;
    for (long j = lo; j <= hi; ++j) {
      const double k = cubic_kernel((static_cast<double>(j) - center) / stretch);
      if (k == 0) continue;
      const auto src = static_cast<std::size_t>(std::clamp<long>(j, 0, static_cast<long>(in) - 1));
      w[src] += k;
      total += k;
    }
    for (std::size_t s = 0; s < in; ++s)
      if (w[s] != 0) r.taps[i].push_back({s, w[s] / total});
  }
  return r;
}

/// Separable bicubic resampling, output clamped to [0, 1].
inline ImageBuffer bicubic_resample(const ImageBuffer& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0 || img.empty()) throw InputError("bicubic_resample: zero dimension");
  if (out_h == img.height() && out_w == img.width()) {
    ImageBuffer same = img;
    same.clamp();
    return same;
  }
  const auto rows = resample_taps(img.height(), out_h);
  const auto cols = resample_taps(img.width(), out_w);
  ImageBuffer horiz(img.height(), out_w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img.height(); ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0;
        for (auto [s, w] : cols.taps[x]) acc += w * img.at(c, y, s);
        horiz.at(c, y, x) = acc;
      }
  ImageBuffer out(out_h, out_w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0;
        for (auto [s, w] : rows.taps[y]) acc += w * horiz.at(c, s, x);
        out.at(c, y, x) = acc;
      }
  out.clamp();
  return out;
}

template <class T>
Tensor<T> to_tensor(const ImageBuffer& img) {
  std::vector<T> d(img.values().begin(), img.values().end());
  return Tensor<T>({3, img.height(), img.width()}, std::move(d));
}

/// Stacks same-sized images into [N, 3, H, W].
template <class T>
Tensor<T> to_batch(const std::vector<const ImageBuffer*>& imgs) {
  if (imgs.empty()) throw InputError("to_batch: no images");
  const std::size_t h = imgs[0]->height(), w = imgs[0]->width();
  std::vector<T> d;
  d.reserve(imgs.size() * 3 * h * w);
  for (const auto* im : imgs) {
    if (im->height() != h || im->width() != w) throw DimensionError("to_batch: image sizes differ");
    d.insert(d.end(), im->values().begin(), im->values().end());
  }
  return Tensor<T>({imgs.size(), 3, h, w}, std::move(d));
}

/// Bicubic upscale of a batch [N, 3, h, w] by `scale`, as a constant tensor.
template <class T>
Tensor<T> bicubic_upscale(const Tensor<T>& lr, std::size_t scale) {
  if (lr.rank() != 4 || lr.dim(1) != 3) throw DimensionError("bicubic_upscale: expected [N, 3, h, w]");
  const std::size_t n = lr.dim(0), h = lr.dim(2), w = lr.dim(3), H = h * scale, W = w * scale;
  std::vector<T> out;
  out.reserve(n * 3 * H * W);
  ImageBuffer img(h, w);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < 3 * h * w; ++i) img.values()[i] = static_cast<double>(lr[k * 3 * h * w + i]);
    const auto up = bicubic_resample(img, H, W);
    out.insert(out.end(), up.values().begin(), up.values().end());
  }
  return Tensor<T>({n, 3, H, W}, std::move(out));
}

/// [3, H, W] or [1, 3, H, W] (or sample `n` of a batch) -> clamped image.
template <class T>
ImageBuffer from_tensor(const Tensor<T>& t, std::size_t n = 0) {
  const std::size_t r = t.rank();
  if ((r != 3 && r != 4) || t.dim(r - 3) != 3) {
    throw DimensionError("from_tensor: expected [3, H, W] or [N, 3, H, W], got " + to_string(t.shape()));
  }
  const std::size_t h = t.dim(r - 2), w = t.dim(r - 1);
  if (r == 4 && n >= t.dim(0)) throw DimensionError("from_tensor: sample index out of range");
  ImageBuffer img(h, w);
  const std::size_t base = n * 3 * h * w;
  for (std::size_t i = 0; i < 3 * h * w; ++i) img.values()[i] = static_cast<double>(t[base + i]);
  img.clamp();
  return img;
}

}  // namespace tisr
