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

#include <bit>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "tisr/adam.hpp"
#include "tisr/autograd.hpp"
#include "tisr/params.hpp"
#include "tisr/text.hpp"

namespace tisr {

/// Additive attention mask for L tokens of which the first `valid` are real.
/// Keys at positions >= valid receive a large negative score.
template <class T>
Tensor<T> key_padding_mask(std::size_t rows, std::size_t cols, std::size_t valid) {
  std::vector<T> m(rows * cols, T(0));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = valid; j < cols; ++j) m[i * cols + j] = T(-1e9);
  return Tensor<T>({rows, cols}, std::move(m));
}

/// Fixed sinusoidal codes for `count` slots of width d.
template <class T>
Tensor<T> sinusoid_codes(std::size_t count, std::size_t d) {
  std::vector<T> v(count * d);
  for (std::size_t p = 0; p < count; ++p)
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i / 2 * 2) / static_cast<double>(d));
      const double a = static_cast<double>(p + 1) * freq;
      v[p * d + i] = static_cast<T>(0.1 * (i % 2 ? std::cos(a) : std::sin(a)));
    }
  return Tensor<T>({count, d}, std::move(v));
}

/// Pre-norm transformer block with single-head attention and a ReLU MLP.
template <class T>
struct TransformerBlock {
  LayerNormParams<T> ln1, ln2;
  Linear<T> q, k, v, o, fc1, fc2;

  static TransformerBlock init(std::size_t d, std::size_t hidden, Prng& rng) {
    TransformerBlock b;
    b.ln1 = LayerNormParams<T>::init(d);
    b.ln2 = LayerNormParams<T>::init(d);
    b.q = Linear<T>::init(d, d, rng);
    b.k = Linear<T>::init(d, d, rng);
    b.v = Linear<T>::init(d, d, rng);
    b.o = Linear<T>::init(d, d, rng, 0.5);
    b.fc1 = Linear<T>::init(d, hidden, rng, std::sqrt(2.0));
    b.fc2 = Linear<T>::init(hidden, d, rng, 0.5);
    return b;
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& mask) const {
    auto h = ln1(x);
    auto x1 = add(x, o(scaled_dot_attention(q(h), k(h), v(h), mask)));
    return add(x1, fc2(relu(fc1(ln2(x1)))));
  }

  void collect(ParamSet<T>& out, const std::string& prefix) const {
    ln1.collect(out, prefix + ".ln1");
    q.collect(out, prefix + ".q");
    k.collect(out, prefix + ".k");
    v.collect(out, prefix + ".v");
    o.collect(out, prefix + ".o");
    ln2.collect(out, prefix + ".ln2");
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
  }
};

struct EncoderConfig {
  std::size_t vocab_size = 32;
  std::size_t max_len = 16;
  std::size_t text_dim = 64;     // d_t: text width and joint embedding width
  std::size_t text_blocks = 2;
  std::size_t vit_dim = 128;
  std::size_t vit_blocks = 2;
  std::size_t vit_mlp = 256;
  std::size_t image_size = 64;   // HR side length seen by the ViT
  std::size_t grid = 8;          // patches per side; patch = image_size / grid
};

/// Pooled caption vector (features at the EOS position) plus per-token
/// features, both in the joint width d_t.
template <class T>
struct TextFeatures {
  Tensor<T> pooled;  // [d_t]
  Tensor<T> tokens;  // [L x d_t]
  std::size_t valid = 0;  // tokens up to and including EOS
};

/// Text encoder E_T.
template <class T>
struct TextEncoder {
  Tensor<T> token_embedding;  // [V x d_t]
  Tensor<T> position;         // [max_len x d_t]
  std::vector<TransformerBlock<T>> blocks;
  LayerNormParams<T> ln_final;
  Linear<T> projection;

  static TextEncoder init(const EncoderConfig& cfg, Prng& rng) {
    TextEncoder e;
    const std::size_t d = cfg.text_dim;
    e.token_embedding = Tensor<T>::randn({cfg.vocab_size, d}, rng, 0.5, true);
    e.position = Tensor<T>::randn({cfg.max_len, d}, rng, 0.1, true);
    for (std::size_t i = 0; i < cfg.text_blocks; ++i) {
      e.blocks.push_back(TransformerBlock<T>::init(d, 2 * d, rng));
    }
    e.ln_final = LayerNormParams<T>::init(d);
    e.projection = Linear<T>::init(d, d, rng);
    return e;
  }

  /// Runs on raw ids where only positions <= eos are attended to.
  TextFeatures<T> encode_ids(std::span<const int> ids, std::size_t eos) const {
    const std::size_t L = ids.size();
    if (L == 0 || L > position.dim(0) || eos >= L) {
      throw DimensionError("encode_text: sequence of length " + std::to_string(L) +
                           " (eos at " + std::to_string(eos) + ") exceeds position table of " +
                           std::to_string(position.dim(0)));
    }
    auto x = add(embedding(token_embedding, ids), slice0(position, 0, L));
    const auto mask = key_padding_mask<T>(L, L, eos + 1);
    for (const auto& b : blocks) x = b(x, mask);
    auto tokens = projection(ln_final(x));
    auto pooled = reshape(slice0(tokens, eos, 1), Shape{tokens.dim(1)});
    return {pooled, tokens, eos + 1};
  }

  TextFeatures<T> encode(const TokenSequence& seq) const {
    return encode_ids(seq.ids, seq.eos_position());
  }

  void collect(ParamSet<T>& out, const std::string& prefix) const {
    out.add(prefix + ".token_embedding", token_embedding);
    out.add(prefix + ".position", position);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].collect(out, prefix + ".block" + std::to_string(i));
    }
    ln_final.collect(out, prefix + ".ln_final");
    projection.collect(out, prefix + ".projection");
  }
};

/// Stride-2 stages needed to bring a square LR input down to 8x8.
inline std::size_t lr_encoder_depth(std::size_t lr_size) {
  if (lr_size < 16 || lr_size % 8 != 0 || !std::has_single_bit(lr_size / 8)) {
    throw ConfigError("unsupported LR size " + std::to_string(lr_size) +
                      " (expected 8 * 2^k with k >= 1, e.g. 16, 32, 64)");
  }
  return static_cast<std::size_t>(std::countr_zero(lr_size / 8));
}

/// Image encoder E_I: log2(lr/8) stride-2 stages then a 3x3 output conv,
/// producing an 8x8 feature map.
template <class T>
struct ImageEncoderLR {
  std::size_t lr_size = 16;
  std::vector<Conv<T>> down;
  Conv<T> out;

  static ImageEncoderLR init(std::size_t lr_size, std::size_t channels, Prng& rng) {
    ImageEncoderLR e;
    e.lr_size = lr_size;
    const std::size_t depth = lr_encoder_depth(lr_size);
    for (std::size_t i = 0; i < depth; ++i) {
      e.down.push_back(Conv<T>::init(i == 0 ? 3 : channels, channels, 4, 2, 1, rng));
    }
    e.out = Conv<T>::init(channels, channels, 3, 1, 1, rng, true, 0.5);
    return e;
  }

  /// x [N, 3, lr, lr] -> [N, c, 8, 8]
  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != lr_size || x.dim(3) != lr_size) {
      throw ConfigError("image encoder expects [N, 3, " + std::to_string(lr_size) + ", " +
                        std::to_string(lr_size) + "], got " + to_string(x.shape()));
    }
    auto h = x;
    for (const auto& c : down) h = relu(c(h));
    return out(h);
  }

  void collect(ParamSet<T>& out_set, const std::string& prefix) const {
    for (std::size_t i = 0; i < down.size(); ++i) down[i].collect(out_set, prefix + ".down" + std::to_string(i));
    out.collect(out_set, prefix + ".out");
  }
};

template <class T>
struct ViTOutput {
  Tensor<T> tokens;   // [(1 + K + P) x d]
  Tensor<T> cls;      // [1 x d], final-normed class token
  Tensor<T> pooled;   // [1 x d_t], joint-space projection (not normalized)
};

/// Miniature vision transformer standing in for the frozen CLIP-ViT.
/// Sequence layout: [class, prompt_1..prompt_K, patch_1..patch_P].
template <class T>
struct MiniViT {
  std::size_t image_size = 64;
  std::size_t grid = 8;
  Conv<T> patch;
  Tensor<T> cls;       // [1 x d]
  Tensor<T> position;  // [(1 + P) x d]; row 0 is the class slot
  std::vector<TransformerBlock<T>> blocks;
  LayerNormParams<T> ln_final;
  Linear<T> projection;

  static MiniViT init(const EncoderConfig& cfg, Prng& rng) {
    if (cfg.image_size % cfg.grid != 0) {
      throw ConfigError("ViT image size " + std::to_string(cfg.image_size) +
                        " is not a multiple of the patch grid " + std::to_string(cfg.grid));
    }
    MiniViT m;
    m.image_size = cfg.image_size;
    m.grid = cfg.grid;
    const std::size_t d = cfg.vit_dim, p = cfg.image_size / cfg.grid;
    m.patch = Conv<T>::init(3, d, p, p, 0, rng, true, std::sqrt(0.5));
    m.cls = Tensor<T>::randn({1, d}, rng, 0.1, true);
    m.position = Tensor<T>::randn({1 + cfg.grid * cfg.grid, d}, rng, 0.1, true);
    for (std::size_t i = 0; i < cfg.vit_blocks; ++i) {
      m.blocks.push_back(TransformerBlock<T>::init(d, cfg.vit_mlp, rng));
    }
    m.ln_final = LayerNormParams<T>::init(d);
    m.projection = Linear<T>::init(d, cfg.text_dim, rng);
    return m;
  }

  std::size_t width() const { return cls.dim(1); }
  std::size_t patch_count() const { return grid * grid; }

  /// Patch embeddings for a batch [N, 3, H, W] -> [N, d, grid, grid].
  Tensor<T> patchify(const Tensor<T>& images) const {
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != image_size ||
        images.dim(3) != image_size) {
      throw DimensionError("ViT expects images [N, 3, " + std::to_string(image_size) + ", " +
                           std::to_string(image_size) + "], got " + to_string(images.shape()));
    }
    return patch(images);
  }

  /// patch_tokens [P x d], prompts [K x d] (may be undefined for K = 0).
  ViTOutput<T> forward(const Tensor<T>& patch_tokens, const Tensor<T>& prompts = Tensor<T>()) const {
    const std::size_t d = width(), P = patch_count();
    if (patch_tokens.rank() != 2 || patch_tokens.dim(0) != P || patch_tokens.dim(1) != d) {
      throw DimensionError("vit_forward: patch tokens " + to_string(patch_tokens.shape()) +
                           " do not match [" + std::to_string(P) + ", " + std::to_string(d) + "]");
    }
    std::vector<Tensor<T>> seq{add(cls, slice0(position, 0, 1))};
    if (prompts.defined() && prompts.numel() > 0) {
      if (prompts.rank() != 2 || prompts.dim(1) != d) {
        throw DimensionError("vit_forward: prompts " + to_string(prompts.shape()) +
                             " do not have width " + std::to_string(d));
      }
      seq.push_back(add(prompts, sinusoid_codes<T>(prompts.dim(0), d)));
    }
    seq.push_back(add(patch_tokens, slice0(position, 1, P)));
    auto x = concat0(seq);
    for (const auto& b : blocks) x = b(x, Tensor<T>());
    auto cls_out = ln_final(slice0(x, 0, 1));
    return {x, cls_out, projection(cls_out)};
  }

  void collect(ParamSet<T>& out, const std::string& prefix) const {
    patch.collect(out, prefix + ".patch");
    out.add(prefix + ".cls", cls);
    out.add(prefix + ".position", position);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].collect(out, prefix + ".block" + std::to_string(i));
    }
    ln_final.collect(out, prefix + ".ln_final");
    projection.collect(out, prefix + ".projection");
  }
};

/// Image-side outputs of the frozen encoder for a batch.
template <class T>
struct ImageFeatures {
  Tensor<T> cls;        // [N x d_vit]   C(I): pooled CLIP-ViT feature
  Tensor<T> embedding;  // [N x d_t]     V(I): unit-norm joint embedding
};

/// Paired text encoder and mini-ViT trained contrastively.
template <class T>
struct ClipModel {
  EncoderConfig config;
  Vocabulary vocab;
  TextEncoder<T> text;
  MiniViT<T> vit;

  static ClipModel init(const EncoderConfig& cfg, Vocabulary vocab, std::uint64_t seed) {
    ClipModel m;
    m.config = cfg;
    m.config.vocab_size = vocab.size();
    m.vocab = std::move(vocab);
    Prng rng_text(derive_seed(seed, 11)), rng_vit(derive_seed(seed, 12));
    m.text = TextEncoder<T>::init(m.config, rng_text);
    m.vit = MiniViT<T>::init(m.config, rng_vit);
    return m;
  }

  TokenSequence tokenize(const std::string& caption) const {
    return tisr::tokenize(caption, vocab, config.max_len);
  }

  ImageFeatures<T> encode_images(const Tensor<T>& images) const {
    auto maps = vit.patchify(images);
    std::vector<Tensor<T>> cls, pooled;
    for (std::size_t n = 0; n < images.dim(0); ++n) {
      auto out = vit.forward(map_to_tokens(maps, n));
      cls.push_back(out.cls);
      pooled.push_back(out.pooled);
    }
    return {concat0(cls), l2_normalize(concat0(pooled))};
  }

  /// Pooled F_T for each sequence stacked as [N x d_t].
  Tensor<T> encode_texts(const std::vector<TokenSequence>& seqs) const {
    std::vector<Tensor<T>> rows;
    for (const auto& s : seqs) rows.push_back(reshape(text.encode(s).pooled, Shape{1, config.text_dim}));
    return concat0(rows);
  }

  void collect(ParamSet<T>& out, const std::string& prefix) const {
    text.collect(out, prefix + ".text");
    vit.collect(out, prefix + ".vit");
  }

  ParamSet<T> parameters() const {
    ParamSet<T> p;
    collect(p, "clip");
    return p;
  }
};

/// embed_image_for_clip for a single image [3, H, W]: unit-norm [d_t].
template <class T>
Tensor<T> embed_image_for_clip(const Tensor<T>& image, const ClipModel<T>& model) {
  if (image.rank() != 3) {
    throw DimensionError("embed_image_for_clip expects [3, H, W], got " + to_string(image.shape()));
  }
  auto batch = reshape(image, Shape{1, image.dim(0), image.dim(1), image.dim(2)});
  auto e = model.encode_images(batch).embedding;
  return reshape(e, Shape{e.dim(1)});
}

/// Symmetric cross-entropy over cosine-similarity logits / tau. Both inputs
/// are [n x d] with unit-norm rows; row i of each forms a positive pair.
template <class T>
Tensor<T> contrastive_loss(const Tensor<T>& image_emb, const Tensor<T>& text_emb, T tau) {
  if (image_emb.rank() != 2 || image_emb.shape() != text_emb.shape()) {
    throw DimensionError("contrastive_loss: embeddings " + to_string(image_emb.shape()) + " and " +
                         to_string(text_emb.shape()) + " differ");
  }
  const std::size_t n = image_emb.dim(0);
  if (n < 2) throw InputError("contrastive_loss: batch must hold at least 2 pairs");
  auto logits = scale(matmul(image_emb, transpose(text_emb)), T(1) / tau);
  const auto diag = Tensor<T>::eye(n);
  auto i2t = sum(mul(log_softmax(logits, 1), diag));
  auto t2i = sum(mul(log_softmax(logits, 0), diag));
  return scale(add(i2t, t2i), T(-0.5) / static_cast<T>(n));
}

/// One contrastive update of both encoders; returns the loss before the step.
template <class T>
T contrastive_pretrain_step(const Tensor<T>& images, const std::vector<TokenSequence>& captions,
                            ClipModel<T>& model, AdamState<T>& opt, T tau = T(0.07)) {
  if (images.rank() != 4 || images.dim(0) != captions.size()) {
    throw DimensionError("contrastive_pretrain_step: " + std::to_string(captions.size()) +
                         " captions for images " + to_string(images.shape()));
  }
  if (captions.size() < 2) throw InputError("contrastive_pretrain_step: batch of 1");
  auto params = model.parameters().tensors();
  zero_grad(params);
  auto loss = contrastive_loss(model.encode_images(images).embedding,
                               l2_normalize(model.encode_texts(captions)), tau);
  const T value = loss.item();
  backward(loss);
  adam_step(params, opt);
  return value;
}

/// Fraction of captions whose most similar image in the batch is their own.
template <class T>
double retrieval_top1(const ClipModel<T>& model, const Tensor<T>& images,
                      const std::vector<TokenSequence>& captions) {
  NoGradGuard ng;
  auto img = model.encode_images(images).embedding;
  auto txt = l2_normalize(model.encode_texts(captions));
  auto sim = matmul(txt, transpose(img));
  const std::size_t n = captions.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (sim[i * n + j] > sim[i * n + best]) best = j;
    hits += best == i;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace tisr
