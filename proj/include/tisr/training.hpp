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

#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tisr/dataset.hpp"
#include "tisr/generator.hpp"
#include "tisr/losses.hpp"
#include "tisr/metrics.hpp"

namespace tisr {

struct SrTrainConfig {
  GeneratorConfig gen;
  LossWeights weights;
  bool use_disc = true;
  std::size_t disc_hidden = 128;
  double lr = 2e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
};

/// Everything that changes during SR training.
template <class T>
struct SrModel {
  Generator<T> gen;
  Discriminator<T> disc;
  PerceptualNet<T> phi;
  AdamState<T> opt_g;
  AdamState<T> opt_d;
  std::size_t step = 0;

  static SrModel init(const SrTrainConfig& cfg) {
    if (cfg.use_disc && !cfg.gen.use_text) {
      throw ConfigError("the discriminator is text-conditioned and needs use_text = true");
    }
    cfg.weights.validate();
    SrModel m;
    m.gen = Generator<T>::init(cfg.gen, cfg.seed);
    if (cfg.use_disc) m.disc = Discriminator<T>::init(cfg.gen.vit_dim, cfg.gen.text_dim, cfg.disc_hidden, cfg.seed);
    m.phi = PerceptualNet<T>::standard(cfg.seed);
    for (auto* opt : {&m.opt_g, &m.opt_d}) {
      opt->lr = cfg.lr;
      opt->beta1 = cfg.beta1;
      opt->beta2 = cfg.beta2;
    }
    return m;
  }

  ParamSet<T> disc_parameters() const {
    ParamSet<T> p;
    if (disc.out.w.defined()) disc.collect(p, "disc");
    return p;
  }
};

struct LossRecord {
  std::size_t step = 0;
  double rec = 0, per = 0, adv = 0, disc = 0, total = 0;
};

template <class T>
struct SrBatch {
  Tensor<T> lr;  // [N, 3, h, w]
  Tensor<T> hr;  // [N, 3, H, W]
  std::vector<TokenSequence> captions;
};

/// Text conditioning for a batch, or nothing when the text path is off.
template <class T>
std::optional<TextConditioning<T>> condition(const SrBatch<T>& b, const GeneratorConfig& g, const ClipModel<T>* clip) {
  if (!g.use_text) return std::nullopt;
  if (!clip) throw ConfigError("text path enabled but no pretrained encoder loaded");
  NoGradGuard ng;
  return encode_captions(*clip, b.captions);
}

/// One discriminator update on detached fakes, then one generator update on
/// L_total with the discriminator held fixed.
template <class T>
LossRecord train_step(SrModel<T>& m, const SrBatch<T>& b, const ClipModel<T>* clip, const SrTrainConfig& cfg) {
  const auto text = condition(b, cfg.gen, clip);
  const TextConditioning<T>* tc = text ? &*text : nullptr;
  auto g_params = m.gen.parameters().tensors();
  zero_grad(g_params);
  auto sr = m.gen.forward(b.lr, tc, clip);

  LossRecord rec;
  rec.step = m.step;
  if (cfg.use_disc) {
    auto d_params = m.disc_parameters().tensors();
    zero_grad(d_params);
    auto ld = disc_loss(b.hr, sr, tc->pooled, m.disc, *clip, cfg.weights.disc);
    rec.disc = static_cast<double>(ld.item());
    backward(ld);
    adam_step(d_params, m.opt_d);
  }

  auto l_rec = rec_loss(sr, b.hr);
  auto l_per = perceptual_loss(sr, b.hr, m.phi, cfg.weights.sigma);
  Tensor<T> l_adv = Tensor<T>::scalar(T(0));
  if (cfg.use_disc) {
    FreezeScope<T> frozen(m.disc_parameters());
    l_adv = adv_loss_generator(sr, tc->pooled, m.disc, *clip, cfg.weights.alpha);
  }
  auto total = total_loss(l_rec, l_per, l_adv, cfg.weights);
  rec.rec = static_cast<double>(l_rec.item());
  rec.per = static_cast<double>(l_per.item());
  rec.adv = static_cast<double>(l_adv.item());
  rec.total = static_cast<double>(total.item());
  backward(total);
  adam_step(g_params, m.opt_g);
  ++m.step;
  return rec;
}

/// HR/LR pairs with captions held in memory.
struct SrDataset {
  std::vector<ImageBuffer> hr;
  std::vector<ImageBuffer> lr;
  std::vector<std::string> captions;
  std::vector<SceneSpec> scenes;

  std::size_t size() const { return hr.size(); }
};

inline SrDataset make_sr_dataset(const std::vector<Sample>& samples, std::size_t scale) {
  SrDataset d;
  for (const auto& s : samples) {
    d.hr.push_back(s.hr);
    d.lr.push_back(degrade(s.hr, scale));
    d.captions.push_back(s.caption);
    d.scenes.push_back(s.scene);
  }
  return d;
}

template <class T>
SrBatch<T> make_batch(const SrDataset& d, const std::vector<std::size_t>& idx, const Vocabulary* vocab,
                      std::size_t max_len) {
  if (idx.empty()) throw InputError("empty batch");
  std::vector<const ImageBuffer*> lr, hr;
  SrBatch<T> b;
  for (auto i : idx) {
    lr.push_back(&d.lr.at(i));
    hr.push_back(&d.hr.at(i));
    if (vocab) b.captions.push_back(tokenize(d.captions[i], *vocab, max_len));
  }
  b.lr = to_batch<T>(lr);
  b.hr = to_batch<T>(hr);
  return b;
}

/// Batch indices for a step, a pure function of (seed, step): distinct
/// indices drawn uniformly. Resuming at any step replays the same stream.
inline std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t n, std::size_t batch) {
  if (n == 0) throw InputError("training split is empty");
  batch = std::min(batch, n);
  Prng rng(derive_seed(derive_seed(seed, 0x5eed), step));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 0; i < batch; ++i) std::swap(perm[i], perm[i + rng.below(n - i)]);
  perm.resize(batch);
  return perm;
}

/// L_rec of the current generator on a fixed batch, without gradients.
template <class T>
double probe_rec_loss(const SrModel<T>& m, const SrBatch<T>& probe, const ClipModel<T>* clip,
                      const GeneratorConfig& g) {
  NoGradGuard ng;
  const auto text = condition(probe, g, clip);
  return static_cast<double>(rec_loss(m.gen.forward(probe.lr, text ? &*text : nullptr, clip), probe.hr).item());
}

struct EvalReport {
  std::size_t count = 0;
  double model_psnr = 0, model_ssim = 0;
  double bicubic_psnr = 0, bicubic_ssim = 0;
};

/// Super-resolves every item (in chunks) and averages PSNR/SSIM against the
/// ground truth, alongside the bicubic-upsampling baseline.
template <class T>
EvalReport evaluate(const Generator<T>& gen, const ClipModel<T>* clip, const SrDataset& d, std::size_t chunk = 16,
                    std::vector<ImageBuffer>* outputs = nullptr) {
  if (d.size() == 0) throw InputError("evaluation split is empty");
  EvalReport r;
  NoGradGuard ng;
  const Vocabulary* vocab = clip ? &clip->vocab : nullptr;
  const std::size_t max_len = clip ? clip->config.max_len : 0;
  for (std::size_t start = 0; start < d.size(); start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(d.size(), start + chunk); ++i) idx.push_back(i);
    auto b = make_batch<T>(d, idx, vocab, max_len);
    const auto text = condition(b, gen.config, clip);
    auto sr = gen.forward(b.lr, text ? &*text : nullptr, clip);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto out = quantized(from_tensor(sr, k));
      const auto& gt = d.hr[idx[k]];
      const auto base = quantized(bicubic_resample(d.lr[idx[k]], gt.height(), gt.width()));
      r.model_psnr += psnr(out, gt);
      r.model_ssim += ssim(out, gt);
      r.bicubic_psnr += psnr(base, gt);
      r.bicubic_ssim += ssim(base, gt);
      if (outputs) outputs->push_back(out);
    }
  }
  r.count = d.size();
  const double n = static_cast<double>(r.count);
  r.model_psnr /= n;
  r.model_ssim /= n;
  r.bicubic_psnr /= n;
  r.bicubic_ssim /= n;
  return r;
}

}  // namespace tisr
