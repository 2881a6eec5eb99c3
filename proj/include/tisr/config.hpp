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

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tisr/io.hpp"
#include "tisr/pretrain.hpp"
#include "tisr/training.hpp"

namespace tisr {

/// Every run setting. Defaults are the desk-scale full model.
struct RunConfig {
  // [model]
  std::size_t scale = 4;
  std::size_t hr_size = 64;
  std::size_t channels = 32;
  std::size_t depth = 4;
  std::size_t prompts = 4;
  std::size_t text_dim = 64;
  std::size_t vit_dim = 128;
  std::size_t text_blocks = 2;
  std::size_t vit_blocks = 2;
  std::size_t vit_mlp = 256;
  std::size_t max_len = 16;
  std::size_t affine_hidden = 64;
  std::size_t disc_hidden = 128;
  bool bicubic_skip = true;
  // [ablation]
  bool use_text = true;
  bool use_vit = true;
  bool use_discriminator = true;
  // [loss]
  double lambda_adv = 0.01;
  double alpha = 4.0;
  std::vector<double> sigma{0.2, 0.2, 0.2, 0.2, 0.2};
  std::string disc_objective = "hinge";
  // [train]
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.9;
  std::size_t batch = 8;
  std::size_t steps = 2000;
  std::size_t epochs = 0;  // when > 0, overrides steps
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
  std::size_t checkpoint_every = 500;
  // [pretrain]
  double pretrain_lr = 5e-4;
  double pretrain_beta1 = 0.9;
  double pretrain_beta2 = 0.999;
  std::size_t pretrain_batch = 16;
  std::size_t pretrain_steps = 1500;
  double tau = 0.07;

  std::size_t lr_size() const { return hr_size / scale; }

  void validate() const {
    require_supported_scale(scale);
    if (hr_size % scale != 0) {
      throw ConfigError("model.hr_size " + std::to_string(hr_size) + " is not divisible by scale " +
                        std::to_string(scale));
    }
    lr_encoder_depth(lr_size());
    if (hr_size % 8 != 0) throw ConfigError("model.hr_size must be a multiple of the 8x8 patch grid");
    if (channels == 0 || depth == 0 || text_dim == 0 || vit_dim == 0 || affine_hidden == 0 || disc_hidden == 0) {
      throw ConfigError("model widths and depth must be positive");
    }
    if (prompts == 0) throw ConfigError("model.prompts must be at least 1");
    if (max_len < 2) throw ConfigError("model.max_len must be at least 2");
    if (sigma.size() != 5) throw ConfigError("loss.sigma must list 5 layer weights");
    parse_disc_objective(disc_objective);
    loss_weights().validate();
    if (!(lr > 0) || !(pretrain_lr > 0)) throw ConfigError("learning rates must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("train betas must be in [0, 1)");
    if (!(pretrain_beta1 >= 0 && pretrain_beta1 < 1 && pretrain_beta2 >= 0 && pretrain_beta2 < 1)) {
      throw ConfigError("pretrain betas must be in [0, 1)");
    }
    if (batch == 0 || pretrain_batch < 2) throw ConfigError("batch sizes must be positive (pretraining >= 2)");
    if (!(tau > 0)) throw ConfigError("pretrain.tau must be positive");
    if (use_discriminator && !use_text) throw ConfigError("ablation.use_discriminator needs use_text");
    if (use_vit && !use_text) throw ConfigError("ablation.use_vit needs use_text");
  }

  /// "Ours" and the three reduced variants.
  std::string variant() const {
    if (!use_text) return "variant-1 (no text)";
    if (!use_vit && !use_discriminator) return "variant-2 (text, no ViT, no discriminator)";
    if (use_vit && !use_discriminator) return "variant-3 (text + ViT, no discriminator)";
    if (use_vit && use_discriminator) return "full";
    return "custom";
  }

  LossWeights loss_weights() const {
    LossWeights w;
    w.lambda_adv = lambda_adv;
    w.alpha = alpha;
    w.sigma = sigma;
    w.disc = parse_disc_objective(disc_objective);
    return w;
  }

  GeneratorConfig generator() const {
    GeneratorConfig g;
    g.scale = scale;
    g.lr_size = lr_size();
    g.channels = channels;
    g.depth = depth;
    g.prompts = prompts;
    g.text_dim = text_dim;
    g.vit_dim = vit_dim;
    g.affine_hidden = affine_hidden;
    g.use_text = use_text;
    g.use_vit = use_vit;
    g.bicubic_skip = bicubic_skip;
    return g;
  }

  EncoderConfig encoder() const {
    EncoderConfig e;
    e.max_len = max_len;
    e.text_dim = text_dim;
    e.text_blocks = text_blocks;
    e.vit_dim = vit_dim;
    e.vit_blocks = vit_blocks;
    e.vit_mlp = vit_mlp;
    e.image_size = hr_size;
    e.grid = 8;
    return e;
  }

  SrTrainConfig sr() const {
    SrTrainConfig c;
    c.gen = generator();
    c.weights = loss_weights();
    c.use_disc = use_discriminator;
    c.disc_hidden = disc_hidden;
    c.lr = lr;
    c.beta1 = beta1;
    c.beta2 = beta2;
    c.batch = batch;
    c.seed = seed;
    return c;
  }

  PretrainConfig pretrain() const {
    PretrainConfig p;
    p.batch = pretrain_batch;
    p.steps = pretrain_steps;
    p.lr = pretrain_lr;
    p.beta1 = pretrain_beta1;
    p.beta2 = pretrain_beta2;
    p.tau = tau;
    p.seed = seed;
    return p;
  }

  /// Total SR steps for a training split of `n` pairs.
  std::size_t total_steps(std::size_t n) const {
    if (epochs == 0) return steps;
    return epochs * ((n + batch - 1) / batch);
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class U>
U parse_number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  U v{};
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "on" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "off" || t == "no" || t == "0") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

struct Field {
  std::string key;  // section.name
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  bool architecture = false;  // must match between checkpoint and run
};

template <class U>
Field bind_field(std::string key, U RunConfig::*member, bool architecture = false) {
  Field f;
  f.key = key;
  f.architecture = architecture;
  f.get = [member](const RunConfig& c) {
    if constexpr (std::is_same_v<U, bool>) return std::string(c.*member ? "true" : "false");
    else if constexpr (std::is_same_v<U, double>) return format_double(c.*member);
    else if constexpr (std::is_same_v<U, std::string>) return c.*member;
    else if constexpr (std::is_same_v<U, std::vector<double>>) {
      std::string s;
      for (std::size_t i = 0; i < (c.*member).size(); ++i) s += (i ? "," : "") + format_double((c.*member)[i]);
      return s;
    } else return std::to_string(c.*member);
  };
  f.set = [member, key](RunConfig& c, const std::string& text) {
    if constexpr (std::is_same_v<U, bool>) c.*member = parse_bool(key, text);
    else if constexpr (std::is_same_v<U, std::string>) c.*member = trim(text);
    else if constexpr (std::is_same_v<U, std::vector<double>>) {
      std::vector<double> out;
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, item));
      c.*member = out;
    } else c.*member = parse_number<U>(key, text);
  };
  return f;
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      bind_field("model.scale", &RunConfig::scale, true),
      bind_field("model.hr_size", &RunConfig::hr_size, true),
      bind_field("model.channels", &RunConfig::channels, true),
      bind_field("model.depth", &RunConfig::depth, true),
      bind_field("model.prompts", &RunConfig::prompts, true),
      bind_field("model.text_dim", &RunConfig::text_dim, true),
      bind_field("model.vit_dim", &RunConfig::vit_dim, true),
      bind_field("model.text_blocks", &RunConfig::text_blocks, true),
      bind_field("model.vit_blocks", &RunConfig::vit_blocks, true),
      bind_field("model.vit_mlp", &RunConfig::vit_mlp, true),
      bind_field("model.max_len", &RunConfig::max_len, true),
      bind_field("model.affine_hidden", &RunConfig::affine_hidden, true),
      bind_field("model.disc_hidden", &RunConfig::disc_hidden, true),
      bind_field("model.bicubic_skip", &RunConfig::bicubic_skip, true),
      bind_field("ablation.use_text", &RunConfig::use_text, true),
      bind_field("ablation.use_vit", &RunConfig::use_vit, true),
      bind_field("ablation.use_discriminator", &RunConfig::use_discriminator, true),
      bind_field("loss.lambda_adv", &RunConfig::lambda_adv),
      bind_field("loss.alpha", &RunConfig::alpha),
      bind_field("loss.sigma", &RunConfig::sigma),
      bind_field("loss.disc_objective", &RunConfig::disc_objective),
      bind_field("train.lr", &RunConfig::lr),
      bind_field("train.beta1", &RunConfig::beta1),
      bind_field("train.beta2", &RunConfig::beta2),
      bind_field("train.batch", &RunConfig::batch),
      bind_field("train.steps", &RunConfig::steps),
      bind_field("train.epochs", &RunConfig::epochs),
      bind_field("train.seed", &RunConfig::seed),
      bind_field("train.log_every", &RunConfig::log_every),
      bind_field("train.checkpoint_every", &RunConfig::checkpoint_every),
      bind_field("pretrain.lr", &RunConfig::pretrain_lr),
      bind_field("pretrain.beta1", &RunConfig::pretrain_beta1),
      bind_field("pretrain.beta2", &RunConfig::pretrain_beta2),
      bind_field("pretrain.batch", &RunConfig::pretrain_batch),
      bind_field("pretrain.steps", &RunConfig::pretrain_steps),
      bind_field("pretrain.tau", &RunConfig::tau),
  };
  return table;
}

inline const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace detail

/// Applies one `section.key=value` override.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  detail::field(detail::trim(assignment.substr(0, eq))).set(cfg, assignment.substr(eq + 1));
}

/// Parses INI text on top of the defaults. Unknown sections or keys are errors.
inline RunConfig parse_config(const std::string& text, const std::string& origin = "config") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError(origin + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      detail::field(section + "." + key).set(cfg, value.data());
    }
  }
  return cfg;
}

inline RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides = {}) {
  RunConfig cfg = path.empty() ? RunConfig{} : parse_config(read_file(path), path.string());
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

/// INI rendering of every key, grouped by section in table order.
inline std::string config_to_ini(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& f : detail::fields()) {
    const auto dot = f.key.find('.');
    const auto sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& f : detail::fields()) j[f.key] = f.get(cfg);
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) detail::field(key).set(cfg, value.get<std::string>());
  return cfg;
}

/// Architecture keys on which two configs disagree.
inline std::vector<std::string> architecture_mismatches(const RunConfig& a, const RunConfig& b) {
  std::vector<std::string> out;
  for (const auto& f : detail::fields())
    if (f.architecture && f.get(a) != f.get(b)) out.push_back(f.key + " (" + f.get(a) + " vs " + f.get(b) + ")");
  return out;
}

}  // namespace tisr
