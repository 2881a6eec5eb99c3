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

#include <functional>
#include <string>
#include <vector>

#include "tisr/dataset.hpp"
#include "tisr/encoders.hpp"
#include "tisr/training.hpp"

namespace tisr {

struct PretrainConfig {
  std::size_t batch = 16;
  std::size_t steps = 1500;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double tau = 0.07;
  std::uint64_t seed = 0;
};

/// Image/caption pairs for contrastive training (images at the ViT input size).
struct ClipCorpus {
  std::vector<ImageBuffer> images;
  std::vector<std::string> captions;

  std::size_t size() const { return images.size(); }
};

inline ClipCorpus make_clip_corpus(const std::vector<Sample>& samples) {
  ClipCorpus c;
  for (const auto& s : samples) {
    c.images.push_back(s.hr);
    c.captions.push_back(s.caption);
  }
  return c;
}

template <class T>
std::pair<Tensor<T>, std::vector<TokenSequence>> clip_batch(const ClipModel<T>& model, const ClipCorpus& c,
                                                           const std::vector<std::size_t>& idx) {
  std::vector<const ImageBuffer*> imgs;
  std::vector<TokenSequence> seqs;
  for (auto i : idx) {
    imgs.push_back(&c.images.at(i));
    seqs.push_back(model.tokenize(c.captions.at(i)));
  }
  return {to_batch<T>(imgs), std::move(seqs)};
}

/// Runs contrastive steps [model step .. cfg.steps). `on_step` sees (step, loss).
template <class T>
void pretrain_clip(ClipModel<T>& model, AdamState<T>& opt, const ClipCorpus& train, const PretrainConfig& cfg,
                   const std::function<void(std::size_t, double)>& on_step = {}) {
  if (train.size() < 2) throw InputError("pretraining needs at least 2 pairs");
  opt.lr = cfg.lr;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  for (std::size_t step = opt.step; step < cfg.steps; ++step) {
    auto [images, seqs] = clip_batch(model, train, batch_indices(cfg.seed, step, train.size(), cfg.batch));
    const double loss = contrastive_pretrain_step(images, seqs, model, opt, static_cast<T>(cfg.tau));
    if (on_step) on_step(step, loss);
  }
}

struct RetrievalReport {
  double top1 = 0;  // mean within-batch text->image top-1 accuracy
  double loss = 0;  // mean contrastive loss
  std::size_t batches = 0;
};

/// Within-batch retrieval over consecutive disjoint batches of `batch` pairs.
template <class T>
RetrievalReport evaluate_retrieval(const ClipModel<T>& model, const ClipCorpus& c, std::size_t batch, double tau) {
  RetrievalReport r;
  NoGradGuard ng;
  for (std::size_t start = 0; start + batch <= c.size(); start += batch) {
    std::vector<std::size_t> idx(batch);
    std::iota(idx.begin(), idx.end(), start);
    auto [images, seqs] = clip_batch(model, c, idx);
    r.top1 += retrieval_top1(model, images, seqs);
    r.loss += static_cast<double>(contrastive_loss(model.encode_images(images).embedding,
                                                   l2_normalize(model.encode_texts(seqs)), static_cast<T>(tau))
                                      .item());
    ++r.batches;
  }
  if (r.batches == 0) throw InputError("held-out set smaller than one batch");
  r.top1 /= static_cast<double>(r.batches);
  r.loss /= static_cast<double>(r.batches);
  return r;
}

}  // namespace tisr
