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

#include <atomic>
#include <bit>
#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tisr/encoders.hpp"
#include "tisr/image.hpp"

namespace tisr {

/// Counters for checking which code paths a run touches.
struct Instrumentation {
  std::atomic<long> text_path{0};          // text encoder / affine MLP evaluations
  std::atomic<long> refinement_stages{0};  // refinement stages executed
  std::atomic<long> vit_calls{0};          // ViT passes inside the generator

  void reset() {
    text_path = 0;
    refinement_stages = 0;
    vit_calls = 0;
  }
};

inline Instrumentation& instrumentation() {
  static Instrumentation counters;
  return counters;
}

inline void require_supported_scale(std::size_t scale) {
  if (scale != 4 && scale != 8 && scale != 16) {
    throw ConfigError("unsupported scale factor " + std::to_string(scale) + " (expected 4, 8 or 16)");
  }
}

struct GeneratorConfig {
  std::size_t scale = 4;
  std::size_t lr_size = 16;
  std::size_t channels = 32;
  std::size_t depth = 4;    // refinement stages
  std::size_t prompts = 4;  // K
  std::size_t text_dim = 64;
  std::size_t vit_dim = 128;
  std::size_t affine_hidden = 64;
  bool use_text = true;
  bool use_vit = true;
  bool bicubic_skip = true;  // add the upscaled input inside the output sigmoid
};

/// Text -> per-channel vector: Linear, ReLU, Linear.
template <class T>
struct AffineMlp {
  Linear<T> hidden;
  Linear<T> out;

  Tensor<T> operator()(const Tensor<T>& x) const { return out(relu(hidden(x))); }

  void collect(ParamSet<T>& p, const std::string& prefix) const {
    hidden.collect(p, prefix + ".hidden");
    out.collect(p, prefix + ".out");
  }
};

/// One affine layer: gamma = MLP1(softmax(F_T)), beta = MLP2(softmax(F_T)).
template <class T>
struct AffineStage {
  AffineMlp<T> gamma;
  AffineMlp<T> beta;

  static AffineStage init(std::size_t text_dim, std::size_t hidden, std::size_t channels, Prng& rng) {
    // Softmax inputs are ~1/d_t in magnitude; the first layer is scaled up by
    // d_t so hidden units start at unit scale.
    const double first_gain = std::sqrt(2.0) * static_cast<double>(text_dim) / 4.0;
    AffineStage s;
    s.gamma = {Linear<T>::init(text_dim, hidden, rng, first_gain),
               Linear<T>::init(hidden, channels, rng, 0.1)};
    s.beta = {Linear<T>::init(text_dim, hidden, rng, first_gain),
              Linear<T>::init(hidden, channels, rng, 0.1)};
    auto g = s.gamma.out.b.mutable_data();
    std::fill(g.begin(), g.end(), T(1));
    return s;
  }

  void collect(ParamSet<T>& p, const std::string& prefix) const {
    gamma.collect(p, prefix + ".gamma");
    beta.collect(p, prefix + ".beta");
  }
};

template <class T>
struct ChannelModulation {
  Tensor<T> gamma;  // [N x c]
  Tensor<T> beta;   // [N x c]
};

/// gamma/beta for a batch of text vectors f_t [N x d_t].
template <class T>
ChannelModulation<T> modulation_from_text(const Tensor<T>& f_t, const AffineStage<T>& stage) {
  ++instrumentation().text_path;
  auto weights = softmax(f_t, 1);
  return {stage.gamma(weights), stage.beta(weights)};
}

/// AFF(F | F_T) = gamma * F + beta per channel, before the ReLU.
template <class T>
Tensor<T> affine_modulate_with(const Tensor<T>& f, const ChannelModulation<T>& mod) {
  return channel_affine(f, mod.gamma, mod.beta);
}

/// f [N, c, h, w], f_t [N x d_t].
template <class T>
Tensor<T> affine_modulate(const Tensor<T>& f, const Tensor<T>& f_t, const AffineStage<T>& stage) {
  if (f.rank() != 4 || f_t.rank() != 2 || f_t.dim(0) != f.dim(0)) {
    throw DimensionError("affine_modulate: features " + to_string(f.shape()) +
                         " and text " + to_string(f_t.shape()) + " disagree");
  }
  if (stage.gamma.out.b.numel() != f.dim(1)) {
    throw DimensionError("affine_modulate: stage emits " + std::to_string(stage.gamma.out.b.numel()) +
                         " channels, feature map has " + std::to_string(f.dim(1)));
  }
  return affine_modulate_with(f, modulation_from_text(f_t, stage));
}

/// Two affine+ReLU layers then a 3x3 conv. Shape-preserving.
template <class T>
struct TIFBlockParams {
  AffineStage<T> affine1;
  AffineStage<T> affine2;
  Conv<T> conv;

  static TIFBlockParams init(const GeneratorConfig& cfg, Prng& rng) {
    TIFBlockParams b;
    b.affine1 = AffineStage<T>::init(cfg.text_dim, cfg.affine_hidden, cfg.channels, rng);
    b.affine2 = AffineStage<T>::init(cfg.text_dim, cfg.affine_hidden, cfg.channels, rng);
    b.conv = Conv<T>::init(cfg.channels, cfg.channels, 3, 1, 1, rng);
    return b;
  }

  void collect(ParamSet<T>& p, const std::string& prefix) const {
    affine1.collect(p, prefix + ".affine1");
    affine2.collect(p, prefix + ".affine2");
    conv.collect(p, prefix + ".conv");
  }
};

/// With an undefined f_t the affine layers are skipped (no text path).
template <class T>
Tensor<T> tifblock_forward(const Tensor<T>& f, const Tensor<T>& f_t, const TIFBlockParams<T>& params) {
  Tensor<T> h;
  if (f_t.defined()) {
    h = relu(affine_modulate(f, f_t, params.affine1));
    h = relu(affine_modulate(h, f_t, params.affine2));
  } else {
    h = relu(f);
  }
  return params.conv(h);
}

/// Prompt predictor P: FC over the caption's token features, then one
/// self-attention layer over [K learned queries; projected tokens]. The K
/// query slots become the prompts.
template <class T>
struct PromptPredictorParams {
  Linear<T> fc;
  Tensor<T> queries;  // [K x d_vit]
  Linear<T> q, k, v, o;
  Linear<T> out;

  static PromptPredictorParams init(const GeneratorConfig& cfg, Prng& rng) {
    if (cfg.prompts == 0) throw ConfigError("prompt count K must be at least 1");
    PromptPredictorParams p;
    const std::size_t d = cfg.vit_dim;
    p.fc = Linear<T>::init(cfg.text_dim, d, rng);
    p.queries = Tensor<T>::randn({cfg.prompts, d}, rng, 1.0, true);
    p.q = Linear<T>::init(d, d, rng);
    p.k = Linear<T>::init(d, d, rng);
    p.v = Linear<T>::init(d, d, rng);
    p.o = Linear<T>::init(d, d, rng);
    p.out = Linear<T>::init(d, d, rng, 0.5);
    return p;
  }

  std::size_t count() const { return queries.dim(0); }

  void collect(ParamSet<T>& p, const std::string& prefix) const {
    fc.collect(p, prefix + ".fc");
    p.add(prefix + ".queries", queries);
    q.collect(p, prefix + ".q");
    k.collect(p, prefix + ".k");
    v.collect(p, prefix + ".v");
    o.collect(p, prefix + ".o");
    out.collect(p, prefix + ".out");
  }
};

/// tokens [L x d_t] of which the first `valid` are real -> prompts [K x d_vit].
template <class T>
Tensor<T> predict_prompts(const Tensor<T>& tokens, std::size_t valid,
                          const PromptPredictorParams<T>& params) {
  if (tokens.rank() != 2 || tokens.dim(0) == 0 || tokens.dim(1) != params.fc.w.dim(0)) {
    throw DimensionError("predict_prompts: token features " + to_string(tokens.shape()) +
                         " do not have width " + std::to_string(params.fc.w.dim(0)));
  }
  ++instrumentation().text_path;
  const std::size_t K = params.count(), L = tokens.dim(0);
  auto x = concat0<T>({params.queries, relu(params.fc(tokens))});
  const auto mask = key_padding_mask<T>(K + L, K + L, K + std::min(valid, L));
  auto attended = add(x, params.o(scaled_dot_attention(params.q(x), params.k(x), params.v(x), mask)));
  return params.out(slice0(attended, 0, K));
}

template <class T>
struct RefinementStage {
  TIFBlockParams<T> tif;
  Conv<T> conv;  // 3x3, no bias

  void collect(ParamSet<T>& p, const std::string& prefix) const {
    tif.collect(p, prefix + ".tif");
    conv.collect(p, prefix + ".conv");
  }
};

/// Iterative refinement R: ViT-token merge plus `depth` residual stages.
template <class T>
struct RefinementParams {
  Linear<T> vit_in;   // F_I tokens (c) -> ViT width
  Conv<T> vit_merge;  // 1x1, ViT width -> c
  std::vector<RefinementStage<T>> stages;

  static RefinementParams init(const GeneratorConfig& cfg, Prng& rng) {
    RefinementParams r;
    if (cfg.use_vit) {
      r.vit_in = Linear<T>::init(cfg.channels, cfg.vit_dim, rng);
      // Zero-initialized so the ViT branch starts as a no-op on F_I.
      r.vit_merge = Conv<T>::init(cfg.vit_dim, cfg.channels, 1, 1, 0, rng, true, 0.0);
    }
    for (std::size_t i = 0; i < cfg.depth; ++i) {
      RefinementStage<T> s;
      s.tif = TIFBlockParams<T>::init(cfg, rng);
      s.conv = Conv<T>::init(cfg.channels, cfg.channels, 3, 1, 1, rng, false, 0.5);
      r.stages.push_back(std::move(s));
    }
    return r;
  }

  void collect(ParamSet<T>& p, const std::string& prefix) const {
    vit_in.collect(p, prefix + ".vit_in");
    vit_merge.collect(p, prefix + ".vit_merge");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      stages[i].collect(p, prefix + ".stage" + std::to_string(i));
    }
  }
};

/// Projects ViT patch-token outputs (one [P x d_vit] per sample, P = h*w)
/// onto the feature grid: [N, c, h, w].
template <class T>
Tensor<T> merge_vit_tokens(const std::vector<Tensor<T>>& vit_tokens, std::size_t h, std::size_t w,
                           const RefinementParams<T>& params) {
  std::vector<Tensor<T>> maps;
  for (const auto& t : vit_tokens) maps.push_back(tokens_to_map(t, h, w));
  return params.vit_merge(concat0(maps));
}

/// f0 [N, c, 8, 8]; f_t [N x d_t] or undefined (text off); vit_tokens empty
/// when the ViT path is off. F <- F + Conv(TIFBlock(F, F_T)) per stage.
template <class T>
Tensor<T> refine(const Tensor<T>& f0, const Tensor<T>& f_t, const std::vector<Tensor<T>>& vit_tokens,
                 const RefinementParams<T>& params) {
  if (f0.rank() != 4) throw DimensionError("refine: expected [N, c, h, w], got " + to_string(f0.shape()));
  auto f = f0;
  if (!vit_tokens.empty()) {
    if (vit_tokens.size() != f0.dim(0)) {
      throw DimensionError("refine: " + std::to_string(vit_tokens.size()) +
                           " ViT token sets for batch of " + std::to_string(f0.dim(0)));
    }
    f = add(f, merge_vit_tokens(vit_tokens, f0.dim(2), f0.dim(3), params));
  }
  for (const auto& stage : params.stages) {
    ++instrumentation().refinement_stages;
    f = add(f, stage.conv(tifblock_forward(f, f_t, stage.tif)));
  }
  return f;
}

/// Upsampler G: log2(scale) blocks of {3x3 conv to 4c, pixel shuffle x2,
/// ReLU}, then a 3x3 conv to RGB and a sigmoid.
template <class T>
struct UpsamplerParams {
  std::vector<Conv<T>> blocks;
  Conv<T> to_rgb;

  static UpsamplerParams init(std::size_t channels, std::size_t scale, Prng& rng) {
    require_supported_scale(scale);
    UpsamplerParams u;
    const auto n = static_cast<std::size_t>(std::countr_zero(scale));
    for (std::size_t i = 0; i < n; ++i) u.blocks.push_back(Conv<T>::init(channels, 4 * channels, 3, 1, 1, rng));
    u.to_rgb = Conv<T>::init(channels, 3, 3, 1, 1, rng, true, 0.1);
    return u;
  }

  void collect(ParamSet<T>& p, const std::string& prefix) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(p, prefix + ".block" + std::to_string(i));
    to_rgb.collect(p, prefix + ".to_rgb");
  }
};

/// f [N, c, h, w] -> [N, 3, h*scale, w*scale] with values in [0, 1].
/// `base_logits`, when given, is added before the sigmoid.
template <class T>
Tensor<T> upsample(const Tensor<T>& f, const UpsamplerParams<T>& params, std::size_t scale,
                   const Tensor<T>& base_logits = Tensor<T>()) {
  require_supported_scale(scale);
  if (params.blocks.size() != static_cast<std::size_t>(std::countr_zero(scale))) {
    throw ConfigError("upsampler has " + std::to_string(params.blocks.size()) +
                      " blocks, scale " + std::to_string(scale) + " needs " +
                      std::to_string(std::countr_zero(scale)));
  }
  auto h = f;
  for (const auto& b : params.blocks) h = relu(pixel_shuffle(b(h), 2));
  auto out = params.to_rgb(h);
  if (base_logits.defined()) out = add(out, base_logits);
  return sigmoid(out);
}

/// logit of the bicubic upscale, clamped away from 0 and 1.
template <class T>
Tensor<T> bicubic_logits(const Tensor<T>& lr, std::size_t scale) {
  auto up = bicubic_upscale(lr, scale);
  std::vector<T> d(up.values().begin(), up.values().end());
  for (auto& v : d) {
    const T p = std::clamp(v, T(1e-3), T(1 - 1e-3));
    v = std::log(p / (T(1) - p));
  }
  return Tensor<T>(up.shape(), std::move(d));
}

/// Conditioning for a batch: pooled F_T rows plus per-caption token features.
template <class T>
struct TextConditioning {
  Tensor<T> pooled;                       // [N x d_t]
  std::vector<TextFeatures<T>> captions;  // per sample
};

template <class T>
TextConditioning<T> encode_captions(const ClipModel<T>& clip, const std::vector<TokenSequence>& seqs) {
  TextConditioning<T> c;
  std::vector<Tensor<T>> rows;
  for (const auto& s : seqs) {
    ++instrumentation().text_path;
    c.captions.push_back(clip.text.encode(s));
    rows.push_back(reshape(c.captions.back().pooled, Shape{1, clip.config.text_dim}));
  }
  c.pooled = concat0(rows);
  return c;
}

/// The super-resolution network H.
///
/// Pipeline: E_I(I_LR) -> [ViT with text prompts, merged into F_I] ->
/// refinement stages -> lift back to LR resolution with an LR skip -> G.
template <class T>
struct Generator {
  GeneratorConfig config;
  ImageEncoderLR<T> encoder;
  PromptPredictorParams<T> prompt;
  RefinementParams<T> refinement;
  std::vector<Conv<T>> lift;  // 8x8 -> LR resolution, conv + shuffle
  Conv<T> skip;               // LR image -> c channels at LR resolution
  UpsamplerParams<T> upsampler;

  static Generator init(GeneratorConfig cfg, std::uint64_t seed) {
    require_supported_scale(cfg.scale);
    if (!cfg.use_text) cfg.use_vit = false;
    Generator g;
    g.config = cfg;
    Prng rng(derive_seed(seed, 21));
    g.encoder = ImageEncoderLR<T>::init(cfg.lr_size, cfg.channels, rng);
    if (cfg.use_vit) g.prompt = PromptPredictorParams<T>::init(cfg, rng);
    g.refinement = RefinementParams<T>::init(cfg, rng);
    const std::size_t lifts = lr_encoder_depth(cfg.lr_size);
    for (std::size_t i = 0; i < lifts; ++i) {
      g.lift.push_back(Conv<T>::init(cfg.channels, 4 * cfg.channels, 3, 1, 1, rng));
    }
    g.skip = Conv<T>::init(3, cfg.channels, 3, 1, 1, rng);
    g.upsampler = UpsamplerParams<T>::init(cfg.channels, cfg.scale, rng);
    return g;
  }

  std::size_t hr_size() const { return config.lr_size * config.scale; }

  /// lr [N, 3, lr, lr] -> [N, 3, lr*scale, lr*scale]. `text` may be null
  /// only when the text path is off; `clip` only when the ViT path is off.
  Tensor<T> forward(const Tensor<T>& lr, const TextConditioning<T>* text,
                    const ClipModel<T>* clip) const {
    if (config.use_text && (!text || text->pooled.dim(0) != lr.dim(0))) {
      throw DimensionError("generator: text conditioning missing or batch mismatch");
    }
    if (config.use_vit && !clip) throw ConfigError("generator: ViT path enabled but no encoder given");
    auto f = encoder(lr);
    std::vector<Tensor<T>> vit_tokens;
    if (config.use_vit) {
      const std::size_t K = prompt.count(), P = f.dim(2) * f.dim(3);
      for (std::size_t n = 0; n < lr.dim(0); ++n) {
        ++instrumentation().vit_calls;
        const auto& cap = text->captions[n];
        auto prompts = predict_prompts(cap.tokens, cap.valid, prompt);
        auto out = clip->vit.forward(refinement.vit_in(map_to_tokens(f, n)), prompts);
        vit_tokens.push_back(slice0(out.tokens, 1 + K, P));
      }
    }
    const Tensor<T> f_t = config.use_text ? text->pooled : Tensor<T>();
    auto h = refine(f, f_t, vit_tokens, refinement);
    for (const auto& c : lift) h = relu(pixel_shuffle(c(h), 2));
    h = add(h, skip(lr));
    return upsample(h, upsampler, config.scale, config.bicubic_skip ? bicubic_logits(lr, config.scale) : Tensor<T>());
  }

  void collect(ParamSet<T>& p, const std::string& prefix) const {
    encoder.collect(p, prefix + ".encoder");
    if (config.use_vit) prompt.collect(p, prefix + ".prompt");
    refinement.collect(p, prefix + ".refinement");
    for (std::size_t i = 0; i < lift.size(); ++i) lift[i].collect(p, prefix + ".lift" + std::to_string(i));
    skip.collect(p, prefix + ".skip");
    upsampler.collect(p, prefix + ".upsampler");
  }

  ParamSet<T> parameters() const {
    ParamSet<T> p;
    collect(p, "gen");
    return p;
  }
};

/// Single-image generate: i_lr [3, h, w] and a caption -> [3, h*scale, w*scale].
template <class T>
Tensor<T> generate(const Tensor<T>& i_lr, const std::string& caption, const Generator<T>& gen,
                   const ClipModel<T>* clip) {
  if (i_lr.rank() != 3) throw DimensionError("generate expects [3, h, w], got " + to_string(i_lr.shape()));
  auto batch = reshape(i_lr, Shape{1, i_lr.dim(0), i_lr.dim(1), i_lr.dim(2)});
  std::optional<TextConditioning<T>> text;
  if (gen.config.use_text) {
    if (!clip) throw ConfigError("generate: text path enabled but no encoder given");
    text = encode_captions(*clip, {clip->tokenize(caption)});
  }
  auto out = gen.forward(batch, text ? &*text : nullptr, clip);
  return reshape(out, Shape{3, out.dim(2), out.dim(3)});
}

}  // namespace tisr
