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

#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "tisr/scene.hpp"

namespace tisr {

inline const std::array<std::string, 3> kSplits{"train", "val", "test"};

/// Split percentages, e.g. "80/10/10".
struct SplitFractions {
  double train = 0.8, val = 0.1, test = 0.1;

  static SplitFractions parse(const std::string& text) {
    double a = 0, b = 0, c = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%lf/%lf/%lf%c", &a, &b, &c, &tail) != 3 || a < 0 || b < 0 || c < 0 ||
        a + b + c <= 0) {
      throw ConfigError("splits must look like 80/10/10, got '" + text + "'");
    }
    const double t = a + b + c;
    return {a / t, b / t, c / t};
  }

  /// Entry counts per split; the remainder after flooring goes to test.
  std::array<std::size_t, 3> counts(std::size_t n) const {
    const auto tr = static_cast<std::size_t>(std::floor(train * static_cast<double>(n) + 1e-9));
    const auto va = std::min(n - tr, static_cast<std::size_t>(std::floor(val * static_cast<double>(n) + 1e-9)));
    return {tr, va, n - tr - va};
  }
};

struct ManifestEntry {
  std::string id;
  std::string split;
  std::string image;         // relative to the dataset root
  std::string caption_file;  // relative to the dataset root
  std::string caption;
  SceneSpec scene;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::size_t hr_size = 64;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == name) out.push_back(&e);
    return out;
  }
};

inline nlohmann::ordered_json scene_to_json(const SceneSpec& s, std::size_t size) {
  const auto box = s.bbox(size);
  return {{"shape", std::string(shape_name(s.shape))},
          {"color", s.color},
          {"background", s.background},
          {"center", {s.cx, s.cy}},
          {"half_extent", s.half},
          {"bbox", {box.x0, box.y0, box.x1, box.y1}}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.shape = parse_shape(j.at("shape").get<std::string>());
  s.color = j.at("color").get<std::string>();
  s.background = j.at("background").get<std::string>();
  palette_index(s.color);
  palette_index(s.background);
  s.cx = j.at("center").at(0).get<double>();
  s.cy = j.at("center").at(1).get<double>();
  s.half = j.at("half_extent").get<double>();
  return s;
}

inline std::string manifest_to_text(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "tisr-dataset";
  j["version"] = 1;
  j["seed"] = m.seed;
  j["count"] = m.entries.size();
  j["hr_size"] = m.hr_size;
  auto& items = j["items"] = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    items.push_back({{"id", e.id},
                     {"split", e.split},
                     {"image", e.image},
                     {"caption_file", e.caption_file},
                     {"caption", e.caption},
                     {"scene", scene_to_json(e.scene, m.hr_size)}});
  }
  return j.dump(1) + "\n";
}

inline DatasetManifest manifest_from_text(const std::string& text, const std::string& origin) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "tisr-dataset") throw InputError(origin + ": not a tisr dataset manifest");
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.hr_size = j.at("hr_size").get<std::size_t>();
    for (const auto& it : j.at("items")) {
      ManifestEntry e;
      e.id = it.at("id").get<std::string>();
      e.split = it.at("split").get<std::string>();
      e.image = it.at("image").get<std::string>();
      e.caption_file = it.at("caption_file").get<std::string>();
      e.caption = it.at("caption").get<std::string>();
      e.scene = scene_from_json(it.at("scene"));
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const nlohmann::json::parse_error& ex) {
    throw ParseError(origin + ": " + ex.what(), ex.byte);
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(origin + ": malformed manifest: " + ex.what());
  }
}

struct DatasetOptions {
  fs::path root;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::size_t hr_size = 64;
  SplitFractions splits;
};

inline std::string entry_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

/// Renders `count` scenes at 256x256, resamples them to hr_size and writes
/// <root>/<split>/<id>.ppm, <id>.txt and <root>/manifest.json.
inline DatasetManifest generate_dataset(const DatasetOptions& opt) {
  if (opt.count == 0) throw InputError("dataset-gen: count must be positive");
  if (opt.hr_size < 11 || opt.hr_size > kSceneRenderSize) {
    throw ConfigError("dataset-gen: hr size must be in [11, 256]");
  }
  const auto counts = opt.splits.counts(opt.count);
  for (const auto& s : kSplits) ensure_directory(opt.root / s);
  DatasetManifest m;
  m.seed = opt.seed;
  m.hr_size = opt.hr_size;
  std::size_t split_index = 0, used = 0;
  for (std::size_t i = 0; i < opt.count; ++i) {
    while (used == counts[split_index]) {
      ++split_index;
      used = 0;
    }
    ++used;
    Prng rng(derive_seed(opt.seed, i));
    auto [render, spec] = gen_scene(rng);
    ManifestEntry e;
    e.id = entry_id(i);
    e.split = kSplits[split_index];
    e.image = e.split + "/" + e.id + ".ppm";
    e.caption_file = e.split + "/" + e.id + ".txt";
    e.caption = spec.caption();
    e.scene = spec;
    write_image(opt.root / e.image, bicubic_resample(render, opt.hr_size, opt.hr_size));
    write_file_atomic(opt.root / e.caption_file, e.caption + "\n");
    m.entries.push_back(std::move(e));
  }
  write_file_atomic(opt.root / "manifest.json", manifest_to_text(m));
  return m;
}

inline DatasetManifest load_manifest(const fs::path& root) {
  const auto path = root / "manifest.json";
  if (!fs::exists(path)) throw IoError("no dataset manifest at '" + path.string() + "'");
  return manifest_from_text(read_file(path), path.string());
}

struct Sample {
  ImageBuffer hr;
  std::string caption;
  SceneSpec scene;
};

/// Loads every entry of one split. The caption comes from the caption file.
inline std::vector<Sample> load_split(const fs::path& root, const DatasetManifest& m, const std::string& split) {
  std::vector<Sample> out;
  for (const auto* e : m.split(split)) {
    Sample s;
    s.hr = read_image(root / e->image);
    if (s.hr.height() != m.hr_size || s.hr.width() != m.hr_size) {
      throw ValidationError(e->image + ": expected " + std::to_string(m.hr_size) + "x" + std::to_string(m.hr_size));
    }
    auto text = read_file(root / e->caption_file);
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    s.caption = std::move(text);
    s.scene = e->scene;
    out.push_back(std::move(s));
  }
  return out;
}

/// Bicubic degradation to the LR input for a given scale.
inline ImageBuffer degrade(const ImageBuffer& hr, std::size_t scale) {
  if (scale == 0 || hr.height() % scale != 0 || hr.width() % scale != 0) {
    throw ConfigError("image " + std::to_string(hr.height()) + "x" + std::to_string(hr.width()) +
                      " is not divisible by scale " + std::to_string(scale));
  }
  return bicubic_resample(hr, hr.height() / scale, hr.width() / scale);
}

}  // namespace tisr
