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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "tisr/persist.hpp"

namespace tisr {
namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.channels = 4;
  c.text_dim = 8;
  c.vit_dim = 8;
  c.text_blocks = 1;
  c.vit_blocks = 1;
  c.vit_mlp = 12;
  c.max_len = 10;
  c.affine_hidden = 6;
  c.disc_hidden = 6;
  c.prompts = 2;
  c.batch = 2;
  return c;
}

SrDataset tiny_data(std::size_t n, std::uint64_t seed) {
  Prng rng(seed);
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    auto scene = random_scene(rng);
    samples.push_back({render_scene(scene, 64), scene.caption(), scene});
  }
  return make_sr_dataset(samples, 4);
}

ClipModel<float> tiny_clip(const RunConfig& cfg, const SrDataset& d) {
  auto clip = ClipModel<float>::init(cfg.encoder(), build_vocab(d.captions), 5);
  clip.parameters().set_requires_grad(false);
  return clip;
}

SrBatch<float> batch_at(const SrDataset& d, const RunConfig& cfg, const ClipModel<float>* clip, std::size_t step) {
  return make_batch<float>(d, batch_indices(cfg.seed, step, d.size(), cfg.batch), clip ? &clip->vocab : nullptr,
                           cfg.max_len);
}

bool bit_equal(const ParamSet<float>& a, const ParamSet<float>& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  for (auto ib = b.begin(); ib != b.end(); ++ia, ++ib) {
    if (ia->name != ib->name || ia->tensor.numel() != ib->tensor.numel()) return false;
    if (std::memcmp(ia->tensor.values().data(), ib->tensor.values().data(), 4 * ia->tensor.numel()) != 0) return false;
  }
  return true;
}

double grad_mass(const ParamSet<float>& ps) {
  double g = 0;
  for (const auto& p : ps)
    if (p.tensor.has_grad())
      for (float v : p.tensor.grad()) g += std::abs(v);
  return g;
}

TEST(TrainStep, RecordsFiniteLossesAndAdvancesStep) {
  const auto cfg = tiny_config();
  const auto d = tiny_data(6, 1);
  const auto clip = tiny_clip(cfg, d);
  auto m = SrModel<float>::init(cfg.sr());
  const auto before = m.gen.parameters().tensors()[0].values();
  for (std::size_t s = 0; s < 2; ++s) {
    const auto r = train_step(m, batch_at(d, cfg, &clip, s), &clip, cfg.sr());
    EXPECT_EQ(r.step, s);
    for (double v : {r.rec, r.per, r.adv, r.disc, r.total}) EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(r.rec, 0);
    EXPECT_NEAR(r.total, r.rec + r.per + 0.01 * r.adv, 1e-6);
  }
  EXPECT_EQ(m.step, 2u);
  EXPECT_EQ(m.opt_g.step, 2u);
  EXPECT_EQ(m.opt_d.step, 2u);
  EXPECT_NE(m.gen.parameters().tensors()[0].values(), before);
}

TEST(TrainStep, ZeroAuxiliaryWeightsLeaveOnlyL1) {
  auto cfg = tiny_config();
  cfg.lambda_adv = 0;
  cfg.sigma = {0, 0, 0, 0, 0};
  const auto d = tiny_data(4, 2);
  const auto clip = tiny_clip(cfg, d);
  auto m = SrModel<float>::init(cfg.sr());
  const auto r = train_step(m, batch_at(d, cfg, &clip, 0), &clip, cfg.sr());
  EXPECT_EQ(r.per, 0.0);
  EXPECT_EQ(r.total, r.rec);
}

TEST(TrainStep, FrozenModulesNeverAccumulateGradient) {
  const auto cfg = tiny_config();
  const auto d = tiny_data(6, 3);
  const auto clip = tiny_clip(cfg, d);
  auto m = SrModel<float>::init(cfg.sr());
  const auto clip_before = clip.parameters();
  std::vector<std::vector<float>> snapshot;
  for (const auto& p : clip_before) snapshot.push_back(p.tensor.values());
  ParamSet<float> phi;
  m.phi.collect(phi, "phi");
  for (std::size_t s = 0; s < 3; ++s) train_step(m, batch_at(d, cfg, &clip, s), &clip, cfg.sr());
  EXPECT_EQ(grad_mass(clip.parameters()), 0.0);
  EXPECT_EQ(grad_mass(phi), 0.0);
  std::size_t i = 0;
  for (const auto& p : clip.parameters()) EXPECT_EQ(p.tensor.values(), snapshot[i++]) << p.name;
  EXPECT_GT(grad_mass(m.gen.parameters()), 0.0);
  EXPECT_GT(grad_mass(m.disc_parameters()), 0.0);
}

TEST(TrainStep, VariantOneNeverRunsTextPath) {
  auto cfg = tiny_config();
  cfg.use_text = cfg.use_vit = cfg.use_discriminator = false;
  const auto d = tiny_data(4, 4);
  auto m = SrModel<float>::init(cfg.sr());
  instrumentation().reset();
  const auto b = batch_at(d, cfg, nullptr, 0);
  EXPECT_TRUE(b.captions.empty());
  const auto r = train_step<float>(m, b, nullptr, cfg.sr());
  EXPECT_EQ(instrumentation().text_path.load(), 0);
  EXPECT_EQ(instrumentation().vit_calls.load(), 0);
  EXPECT_EQ(r.adv, 0.0);
  EXPECT_EQ(r.disc, 0.0);
  EXPECT_EQ(m.disc_parameters().size(), 0u);
}

TEST(TrainStep, TextPathWithoutEncoderIsConfigError) {
  const auto cfg = tiny_config();
  const auto d = tiny_data(4, 5);
  const auto clip = tiny_clip(cfg, d);
  auto m = SrModel<float>::init(cfg.sr());
  EXPECT_THROW(train_step<float>(m, batch_at(d, cfg, &clip, 0), nullptr, cfg.sr()), ConfigError);
}

TEST(BatchIndices, PureFunctionOfSeedAndStep) {
  const auto a = batch_indices(3, 17, 50, 8);
  EXPECT_EQ(a, batch_indices(3, 17, 50, 8));
  EXPECT_NE(a, batch_indices(3, 18, 50, 8));
  EXPECT_NE(a, batch_indices(4, 17, 50, 8));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 8u);
  for (auto i : a) EXPECT_LT(i, 50u);
  EXPECT_EQ(batch_indices(1, 0, 3, 8).size(), 3u);
  EXPECT_THROW(batch_indices(1, 0, 0, 8), InputError);
}

TEST(BatchIndices, CoversEveryItemOverManySteps) {
  std::set<std::size_t> seen;
  for (std::size_t s = 0; s < 40; ++s)
    for (auto i : batch_indices(9, s, 30, 4)) seen.insert(i);
  EXPECT_EQ(seen.size(), 30u);
}

TEST(Persist, SrCheckpointResumesBitExactly) {
  const auto cfg = tiny_config();
  const auto d = tiny_data(6, 6);
  const auto clip = tiny_clip(cfg, d);
  auto straight = SrModel<float>::init(cfg.sr());
  for (std::size_t s = 0; s < 4; ++s) train_step(straight, batch_at(d, cfg, &clip, s), &clip, cfg.sr());

  auto first = SrModel<float>::init(cfg.sr());
  for (std::size_t s = 0; s < 2; ++s) train_step(first, batch_at(d, cfg, &clip, s), &clip, cfg.sr());
  const auto dir = fs::temp_directory_path() / "tisr_persist_test";
  fs::create_directories(dir);
  save_checkpoint(dir / "m.ckpt", make_sr_checkpoint(first, &clip, cfg));
  auto loaded = load_sr(dir / "m.ckpt", &cfg);
  ASSERT_TRUE(loaded.clip.has_value());
  EXPECT_EQ(loaded.model.step, 2u);
  EXPECT_TRUE(bit_equal(loaded.clip->parameters(), clip.parameters()));
  EXPECT_EQ(loaded.clip->vocab, clip.vocab);
  for (std::size_t s = 2; s < 4; ++s) {
    train_step(loaded.model, batch_at(d, cfg, &*loaded.clip, s), &*loaded.clip, cfg.sr());
  }
  EXPECT_TRUE(bit_equal(loaded.model.gen.parameters(), straight.gen.parameters()));
  EXPECT_TRUE(bit_equal(loaded.model.disc_parameters(), straight.disc_parameters()));
  fs::remove_all(dir);
}

TEST(Persist, MismatchedConfigsAreRejectedBeforeLoading) {
  const auto cfg = tiny_config();
  const auto d = tiny_data(4, 7);
  const auto clip = tiny_clip(cfg, d);
  const auto m = SrModel<float>::init(cfg.sr());
  const auto dir = fs::temp_directory_path() / "tisr_persist_mismatch";
  fs::create_directories(dir);
  save_checkpoint(dir / "sr.ckpt", make_sr_checkpoint(m, &clip, cfg));
  save_checkpoint(dir / "clip.ckpt", make_clip_checkpoint(clip, cfg, 0));

  auto other = cfg;
  other.depth = 3;
  EXPECT_THROW(load_sr(dir / "sr.ckpt", &other), ValidationError);
  other = cfg;
  other.lr = 0.5;  // training keys may differ
  EXPECT_NO_THROW(load_sr(dir / "sr.ckpt", &other));

  other = cfg;
  other.text_dim = 16;
  EXPECT_THROW(load_clip(dir / "clip.ckpt", &other), ValidationError);
  EXPECT_THROW(load_clip(dir / "sr.ckpt"), ValidationError);
  EXPECT_THROW(load_sr(dir / "clip.ckpt"), ValidationError);

  const auto loaded = load_clip(dir / "clip.ckpt", &cfg);
  EXPECT_TRUE(bit_equal(loaded.model.parameters(), clip.parameters()));
  for (const auto& p : loaded.model.parameters()) EXPECT_FALSE(p.tensor.requires_grad());
  fs::remove_all(dir);
}

TEST(Persist, VariantOneCheckpointCarriesNoEncoder) {
  auto cfg = tiny_config();
  cfg.use_text = cfg.use_vit = cfg.use_discriminator = false;
  const auto m = SrModel<float>::init(cfg.sr());
  const auto ck = make_sr_checkpoint(m, nullptr, cfg);
  EXPECT_TRUE(ck.vocab.empty());
  for (const auto& e : ck.entries) EXPECT_EQ(e.name.rfind("gen.", 0), 0u) << e.name;
  const auto dir = fs::temp_directory_path() / "tisr_persist_v1";
  fs::create_directories(dir);
  save_checkpoint(dir / "v1.ckpt", ck);
  const auto loaded = load_sr(dir / "v1.ckpt");
  EXPECT_FALSE(loaded.clip.has_value());
  EXPECT_EQ(loaded.config.variant(), cfg.variant());
  fs::remove_all(dir);
}

}  // namespace
}  // namespace tisr
