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

#include "tisr/config.hpp"

namespace tisr {
namespace {

TEST(Config, DefaultsMatchReferenceHyperparameters) {
  const RunConfig c;
  EXPECT_EQ(c.lambda_adv, 0.01);
  EXPECT_EQ(c.alpha, 4.0);
  EXPECT_EQ(c.beta1, 0.0);
  EXPECT_EQ(c.beta2, 0.9);
  EXPECT_EQ(c.depth, 4u);
  EXPECT_EQ(c.scale, 4u);
  EXPECT_EQ(c.lr_size(), 16u);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.variant(), "full");
}

TEST(Config, ParsesSectionsAndKeys) {
  const auto c = parse_config(
      "[model]\nscale = 2\nchannels=16\n\n[loss]\nsigma = 1,0,0,0,0.5\ndisc_objective = logistic\n"
      "[train]\nlr = 0.0003\nseed = 42\n[ablation]\nuse_vit = off\n");
  EXPECT_EQ(c.scale, 2u);
  EXPECT_EQ(c.channels, 16u);
  EXPECT_EQ(c.sigma, (std::vector<double>{1, 0, 0, 0, 0.5}));
  EXPECT_EQ(c.disc_objective, "logistic");
  EXPECT_EQ(c.lr, 0.0003);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_FALSE(c.use_vit);
  EXPECT_EQ(c.depth, 4u);
}

TEST(Config, UnknownKeyOrSectionIsRejected) {
  EXPECT_THROW(parse_config("[model]\nwidth = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[optim]\nlr = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("lr = 3\n"), ConfigError);
}

TEST(Config, MalformedValuesAreRejected) {
  EXPECT_THROW(parse_config("[train]\nlr = fast\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nbatch = 8x\n"), ConfigError);
  EXPECT_THROW(parse_config("[ablation]\nuse_text = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("[model\nscale=2\n"), ConfigError);
}

TEST(Config, OverridesApplyOnTopOfFile) {
  RunConfig c;
  apply_override(c, "train.steps=17");
  apply_override(c, "loss.lambda_adv = 0.5");
  EXPECT_EQ(c.steps, 17u);
  EXPECT_EQ(c.lambda_adv, 0.5);
  EXPECT_THROW(apply_override(c, "train.steps"), ConfigError);
  EXPECT_THROW(apply_override(c, "train.nope=1"), ConfigError);
}

TEST(Config, ValidationCatchesBadCombinations) {
  RunConfig c;
  c.scale = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.hr_size = 60;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.use_text = false;
  EXPECT_THROW(c.validate(), ConfigError);
  c.use_vit = false;
  c.use_discriminator = false;
  EXPECT_NO_THROW(c.validate());
  c = RunConfig{};
  c.sigma = {1, 1};
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.disc_objective = "wasserstein";
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.lambda_adv = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, VariantNames) {
  RunConfig c;
  c.use_text = false;
  c.use_vit = false;
  c.use_discriminator = false;
  EXPECT_EQ(c.variant().rfind("variant-1", 0), 0u);
  c.use_text = true;
  EXPECT_EQ(c.variant().rfind("variant-2", 0), 0u);
  c.use_vit = true;
  EXPECT_EQ(c.variant().rfind("variant-3", 0), 0u);
  c.use_discriminator = true;
  EXPECT_EQ(c.variant(), "full");
}

TEST(Config, VariantOneGeneratorHasNoTextPath) {
  RunConfig c;
  c.use_text = c.use_vit = c.use_discriminator = false;
  EXPECT_FALSE(c.generator().use_text);
  EXPECT_FALSE(c.generator().use_vit);
  EXPECT_FALSE(c.sr().use_disc);
}

TEST(Config, IniRoundTripIsExact) {
  RunConfig c;
  c.lr = 1.0 / 3.0;
  c.sigma = {0.1, 0.7, 1e-9, 0, 3};
  c.use_vit = false;
  c.seed = 0xfffffffffffull;
  const auto back = parse_config(config_to_ini(c));
  EXPECT_EQ(config_to_ini(back), config_to_ini(c));
  EXPECT_EQ(back.lr, c.lr);
  EXPECT_EQ(back.sigma, c.sigma);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(Config, JsonRoundTripIsExact) {
  RunConfig c;
  c.tau = 0.123456789012345;
  c.disc_objective = "logistic";
  const auto back = config_from_json(nlohmann::json::parse(config_to_json(c).dump()));
  EXPECT_EQ(config_to_ini(back), config_to_ini(c));
}

TEST(Config, ArchitectureMismatchListsOnlyArchitectureKeys) {
  RunConfig a, b;
  b.lr = 5.0;
  b.steps = 3;
  EXPECT_TRUE(architecture_mismatches(a, b).empty());
  b.channels = 8;
  b.use_vit = false;
  const auto m = architecture_mismatches(a, b);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].rfind("model.channels", 0), 0u);
  EXPECT_EQ(m[1].rfind("ablation.use_vit", 0), 0u);
}

TEST(Config, EpochsDriveStepCount) {
  RunConfig c;
  c.batch = 8;
  c.epochs = 3;
  EXPECT_EQ(c.total_steps(801), 3u * 101u);
  c.epochs = 0;
  EXPECT_EQ(c.total_steps(801), c.steps);
}

TEST(Config, LoadConfigAppliesOverridesThenValidates) {
  const auto dir = fs::temp_directory_path() / "tisr_cfg_test";
  fs::create_directories(dir);
  write_file_atomic(dir / "a.ini", "[train]\nsteps = 9\n");
  const auto c = load_config(dir / "a.ini", {"train.batch=3"});
  EXPECT_EQ(c.steps, 9u);
  EXPECT_EQ(c.batch, 3u);
  EXPECT_THROW(load_config(dir / "a.ini", {"model.scale=5"}), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.ini"), IoError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace tisr
