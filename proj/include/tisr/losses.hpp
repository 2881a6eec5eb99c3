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

#include <string>
#include <vector>

#include "tisr/encoders.hpp"

namespace tisr {

enum class DiscObjective { Hinge, Logistic };

inline DiscObjective parse_disc_objective(const std::string& name) {
  if (name == "hinge") return DiscObjective::Hinge;
  if (name == "logistic") return DiscObjective::Logistic;
  throw ConfigError("unknown discriminator objective '" + name + "' (expected hinge or logistic)");
}

inline std::string to_string(DiscObjective o) { return o == DiscObjective::Hinge ? "hinge" : "logistic"; }

struct LossWeights {
  double lambda_adv = 0.01;
  double alpha = 4.0;
  std::vector<double> sigma{0.2, 0.2, 0.2, 0.2, 0.2};
  DiscObjective disc = DiscObjective::Hinge;

  void validate() const {
    if (!(lambda_adv >= 0)) throw ConfigError("lambda_adv must be >= 0");
    if (!(alpha >= 0)) throw ConfigError("alpha must be >= 0");
    for (double s : sigma)
      if (!(s >= 0)) throw ConfigError("perceptual layer weights must be >= 0");
  }
};

/// L_rec: mean absolute pixel difference.
template <class T>
Tensor<T> rec_loss(const Tensor<T>& sr, const Tensor<T>& gt) {
  if (sr.shape() != gt.shape()) {
    throw DimensionError("rec_loss: " + to_string(sr.shape()) + " vs " + to_string(gt.shape()));
  }
  return mean(abs(sub(sr, gt)));
}

/// Fixed feature network phi: conv stages each followed by ReLU, one tap per
/// stage. Never trained.
template <class T>
struct PerceptualNet {
  std::vector<Conv<T>> stages;

  /// Five seeded stages: 3->16, 16->32 (/2), 32->32, 32->64 (/2), 64->64.
  static PerceptualNet standard(std::uint64_t seed) {
    struct Spec {
      std::size_t in, out, k, stride, pad;
    };
    const Spec specs[] = {{3, 16, 3, 1, 1}, {16, 32, 4, 2, 1}, {32, 32, 3, 1, 1},
                          {32, 64, 4, 2, 1}, {64, 64, 3, 1, 1}};
    Prng rng(derive_seed(seed, 41));
    PerceptualNet net;
    for (const auto& s : specs) net.stages.push_back(Conv<T>::init(s.in, s.out, s.k, s.stride, s.pad, rng));
    net.freeze();
    return net;
  }

  static PerceptualNet from_stages(std::vector<Conv<T>> stages) {
    PerceptualNet net{std::move(stages)};
    net.freeze();
    return net;
  }

  void freeze() {
    for (auto& s : stages) {
      s.w.set_requires_grad(false);
      if (s.b.defined()) s.b.set_requires_grad(false);
    }
  }

  std::vector<Tensor<T>> taps(const Tensor<T>& x) const {
    std::vector<Tensor<T>> out;
    auto h = x;
    for (const auto& s : stages) {
      h = relu(s(h));
      out.push_back(h);
    }
    return out;
  }

  void collect(ParamSet<T>& p, const std::string& prefix) const {
    for (std::size_t i = 0; i < stages.size(); ++i) stages[i].collect(p, prefix + ".stage" + std::to_string(i));
  }
};

/// L_per = sum_i sigma_i * mean|phi_i(sr) - phi_i(gt)|. The target side
/// carries no gradient.
template <class T>
Tensor<T> perceptual_loss(const Tensor<T>& sr, const Tensor<T>& gt, const PerceptualNet<T>& phi,
                          const std::vector<double>& sigma) {
  if (sr.shape() != gt.shape()) {
    throw DimensionError("perceptual_loss: " + to_string(sr.shape()) + " vs " + to_string(gt.shape()));
  }
  if (sigma.size() != phi.stages.size()) {
    throw ConfigError("perceptual_loss: " + std::to_string(sigma.size()) + " layer weights for " +
                      std::to_string(phi.stages.size()) + " taps");
  }
  Tensor<T> total = Tensor<T>::scalar(T(0));
  bool any = false;
  for (double s : sigma) any = any || s != 0;
  if (!any) return total;
  auto a = phi.taps(sr);
  std::vector<Tensor<T>> b;
  {
    NoGradGuard ng;
    b = phi.taps(gt.detach());
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (sigma[i] == 0) continue;
    total = add(total, scale(mean(abs(sub(a[i], b[i]))), static_cast<T>(sigma[i])));
  }
  return total;
}

/// Trainable head D over [C(I), F_T]: a 2-layer MLP. The first layer acts on
/// the concatenation, stored as an image part and a text part.
template <class T>
struct Discriminator {
  Linear<T> image;  // d_vit -> hidden, carries the bias
  Tensor<T> text;   // [d_t x hidden]
  Linear<T> out;    // hidden -> 1

  static Discriminator init(std::size_t vit_dim, std::size_t text_dim, std::size_t hidden,
                            std::uint64_t seed) {
    Prng rng(derive_seed(seed, 31));
    const double fan_in = static_cast<double>(vit_dim + text_dim);
    Discriminator d;
    d.image = Linear<T>::init(vit_dim, hidden, rng, std::sqrt(2.0 * vit_dim / fan_in));
    d.text = Tensor<T>::randn({text_dim, hidden}, rng, std::sqrt(2.0 / fan_in), true);
    d.out = Linear<T>::init(hidden, 1, rng);
    return d;
  }

  /// cls [N x d_vit], f_t [N x d_t] -> scores [N x 1]
  Tensor<T> score(const Tensor<T>& cls, const Tensor<T>& f_t) const {
    if (cls.rank() != 2 || f_t.rank() != 2 || cls.dim(0) != f_t.dim(0)) {
      throw DimensionError("discriminator: image features " + to_string(cls.shape()) +
                           " and text " + to_string(f_t.shape()) + " disagree");
    }
    return out(relu(add(image(cls), matmul(f_t, text))));
  }

  void collect(ParamSet<T>& p, const std::string& prefix) const {
    image.collect(p, prefix + ".image");
    p.add(prefix + ".text", text);
    out.collect(p, prefix + ".out");
  }

  ParamSet<T> parameters() const {
    ParamSet<T> p;
    collect(p, "disc");
    return p;
  }
};

/// D(C(I), F_T) for a batch of images [N, 3, H, W].
template <class T>
Tensor<T> disc_scores(const Tensor<T>& images, const Tensor<T>& f_t, const Discriminator<T>& disc,
                      const ClipModel<T>& clip) {
  return disc.score(clip.encode_images(images).cls, f_t);
}

/// Single image [3, H, W] with text [d_t] -> scalar score.
template <class T>
Tensor<T> disc_forward(const Tensor<T>& image, const Tensor<T>& f_t, const Discriminator<T>& disc,
                       const ClipModel<T>& clip) {
  if (image.rank() != 3) throw DimensionError("disc_forward expects [3, H, W], got " + to_string(image.shape()));
  auto batch = reshape(image, Shape{1, image.dim(0), image.dim(1), image.dim(2)});
  return reshape(disc_scores(batch, reshape(f_t, Shape{1, f_t.numel()}), disc, clip), Shape{1});
}

/// Row-wise cosine similarity of [N x d] matrices -> [N x 1].
template <class T>
Tensor<T> rowwise_cosine(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw DimensionError("cosine: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  return matmul(mul(l2_normalize(a), l2_normalize(b)), Tensor<T>::ones({a.dim(1), 1}));
}

/// -mean(D) - alpha * mean(Sim) from precomputed scores and similarities.
template <class T>
Tensor<T> adv_loss_from_terms(const Tensor<T>& scores, const Tensor<T>& sims, double alpha) {
  return sub(neg(mean(scores)), scale(mean(sims), static_cast<T>(alpha)));
}

/// Generator-side text-constrained adversarial loss on generated images.
/// Gradients flow into the images through the frozen encoder.
template <class T>
Tensor<T> adv_loss_generator(const Tensor<T>& sr, const Tensor<T>& f_t, const Discriminator<T>& disc,
                             const ClipModel<T>& clip, double alpha) {
  auto feats = clip.encode_images(sr);
  return adv_loss_from_terms(disc.score(feats.cls, f_t), rowwise_cosine(feats.embedding, f_t), alpha);
}

/// Discriminator objective from real and fake scores.
template <class T>
Tensor<T> disc_loss_from_scores(const Tensor<T>& real, const Tensor<T>& fake, DiscObjective kind) {
  if (real.numel() == 0 || fake.numel() == 0) throw InputError("disc_loss: empty batch");
  if (kind == DiscObjective::Hinge) {
    return add(mean(relu(add_scalar(neg(real), T(1)))), mean(relu(add_scalar(fake, T(1)))));
  }
  return add(mean(softplus(neg(real))), mean(softplus(fake)));
}

/// Discriminator loss on a real and a generated batch sharing captions. The
/// fakes are detached, so no gradient reaches the generator.
template <class T>
Tensor<T> disc_loss(const Tensor<T>& real, const Tensor<T>& fake, const Tensor<T>& f_t,
                    const Discriminator<T>& disc, const ClipModel<T>& clip,
                    DiscObjective kind = DiscObjective::Hinge) {
  if (real.rank() != 4 || fake.rank() != 4 || real.dim(0) == 0 || fake.dim(0) == 0) {
    throw InputError("disc_loss: real and fake batches must be non-empty [N, 3, H, W]");
  }
  if (real.shape() != fake.shape()) {
    throw DimensionError("disc_loss: real " + to_string(real.shape()) + " vs fake " + to_string(fake.shape()));
  }
  return disc_loss_from_scores(disc_scores(real.detach(), f_t, disc, clip),
                               disc_scores(fake.detach(), f_t, disc, clip), kind);
}

/// L_total = L_rec + L_per + lambda_adv * L_adv.
template <class T>
Tensor<T> total_loss(const Tensor<T>& rec, const Tensor<T>& per, const Tensor<T>& adv, const LossWeights& w) {
  return add(add(rec, per), scale(adv, static_cast<T>(w.lambda_adv)));
}

}  // namespace tisr
