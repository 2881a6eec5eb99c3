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

#include <optional>
#include <string>
#include <vector>

#include "tisr/checkpoint.hpp"

namespace tisr {

namespace detail {

inline void require_kind(const CheckpointHeader& h, const std::string& kind, const fs::path& path) {
  if (h.meta.kind != kind) {
    throw ValidationError("'" + path.string() + "' is a " + h.meta.kind + " checkpoint, expected " + kind);
  }
}

}  // namespace detail

/// Encoder fields on which a run config and an encoder checkpoint disagree.
inline std::vector<std::string> encoder_mismatches(const RunConfig& ckpt, const RunConfig& run) {
  std::vector<std::string> out;
  auto cmp = [&](const char* key, std::size_t a, std::size_t b) {
    if (a != b) out.push_back(std::string(key) + " (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  };
  cmp("model.hr_size", ckpt.hr_size, run.hr_size);
  cmp("model.text_dim", ckpt.text_dim, run.text_dim);
  cmp("model.vit_dim", ckpt.vit_dim, run.vit_dim);
  cmp("model.text_blocks", ckpt.text_blocks, run.text_blocks);
  cmp("model.vit_blocks", ckpt.vit_blocks, run.vit_blocks);
  cmp("model.vit_mlp", ckpt.vit_mlp, run.vit_mlp);
  cmp("model.max_len", ckpt.max_len, run.max_len);
  return out;
}

inline std::string join_list(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& x : items) s += (s.empty() ? "" : ", ") + x;
  return s;
}

/// Frozen text/image encoder pair.
inline Checkpoint make_clip_checkpoint(const ClipModel<float>& clip, const RunConfig& cfg, std::size_t step) {
  Checkpoint ck;
  ck.kind = "clip";
  ck.step = step;
  ck.frozen = true;
  ck.config = cfg;
  ck.vocab = clip.vocab.tokens();
  append_params(ck, clip.parameters());
  return ck;
}

struct LoadedClip {
  RunConfig config;
  std::size_t step = 0;
  ClipModel<float> model;
};

/// Loads an encoder checkpoint. With `run` set, the encoder dimensions must
/// agree with it. Every check runs before any payload byte is read.
inline LoadedClip load_clip(const fs::path& path, const RunConfig* run = nullptr) {
  const std::string bytes = read_file(path);
  const auto h = decode_checkpoint_header(bytes);
  detail::require_kind(h, "clip", path);
  if (run) {
    const auto diff = encoder_mismatches(h.meta.config, *run);
    if (!diff.empty()) throw ValidationError("encoder checkpoint does not match config: " + join_list(diff));
  }
  LoadedClip out{h.meta.config, h.meta.step,
                 ClipModel<float>::init(h.meta.config.encoder(), Vocabulary(h.meta.vocab), h.meta.config.seed)};
  const auto params = out.model.parameters();
  validate_entries(h, {&params}, {});
  restore_params(decode_checkpoint_payload(bytes, h), params);
  out.model.parameters().set_requires_grad(false);
  return out;
}

/// Generator, discriminator, optimizer state and (when the text path is on)
/// a copy of the frozen encoders, so one file is enough for inference.
inline Checkpoint make_sr_checkpoint(const SrModel<float>& m, const ClipModel<float>* clip, const RunConfig& cfg) {
  Checkpoint ck;
  ck.kind = "sr";
  ck.step = m.step;
  ck.frozen = false;
  ck.config = cfg;
  ck.extra["variant"] = cfg.variant();
  const auto gen = m.gen.parameters();
  const auto disc = m.disc_parameters();
  append_params(ck, gen);
  append_params(ck, disc);
  if (clip) {
    ck.vocab = clip->vocab.tokens();
    append_params(ck, clip->parameters());
  }
  append_adam(ck, "opt_g", gen, m.opt_g);
  append_adam(ck, "opt_d", disc, m.opt_d);
  return ck;
}

struct LoadedSr {
  RunConfig config;
  SrModel<float> model;
  std::optional<ClipModel<float>> clip;
};

/// Loads an SR checkpoint. With `run` set, architecture keys must agree.
inline LoadedSr load_sr(const fs::path& path, const RunConfig* run = nullptr) {
  const std::string bytes = read_file(path);
  const auto h = decode_checkpoint_header(bytes);
  detail::require_kind(h, "sr", path);
  if (run) {
    const auto diff = architecture_mismatches(h.meta.config, *run);
    if (!diff.empty()) throw ValidationError("checkpoint does not match config: " + join_list(diff));
  }
  LoadedSr out;
  out.config = run ? *run : h.meta.config;
  out.config.validate();
  out.model = SrModel<float>::init(out.config.sr());
  if (!h.meta.vocab.empty()) {
    out.clip = ClipModel<float>::init(out.config.encoder(), Vocabulary(h.meta.vocab), out.config.seed);
  } else if (out.config.use_text) {
    throw ValidationError("checkpoint has no text encoder but the config enables the text path");
  }
  const auto gen = out.model.gen.parameters();
  const auto disc = out.model.disc_parameters();
  ParamSet<float> clip_params;
  if (out.clip) clip_params = out.clip->parameters();
  validate_entries(h, {&gen, &disc, &clip_params}, {{"opt_g", &gen}, {"opt_d", &disc}});

  const auto ck = decode_checkpoint_payload(bytes, h);
  restore_params(ck, gen);
  restore_params(ck, disc);
  restore_params(ck, clip_params);
  restore_adam(ck, "opt_g", gen, out.model.opt_g);
  restore_adam(ck, "opt_d", disc, out.model.opt_d);
  out.model.step = h.meta.step;
  clip_params.set_requires_grad(false);
  return out;
}

}  // namespace tisr
