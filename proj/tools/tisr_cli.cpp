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

// tisr: dataset generation, encoder pretraining, SR training, inference and
// evaluation. Exit status: 0 success, 2 validation error, 1 runtime error.

#include <iostream>

#include "CLI11.hpp"
#include "tisr/commands.hpp"

namespace {

constexpr const char* kFullSize = "model.hr_size=256";

void add_config_options(CLI::App* cmd, tisr::fs::path& config, std::vector<std::string>& overrides,
                        bool& full_size) {
  cmd->add_option("--config", config, "INI config file (defaults when omitted)");
  cmd->add_option("--set", overrides, "Override a config key, e.g. --set train.steps=100")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  cmd->add_flag("--full-size", full_size, "256x256 HR images (64x64 LR at 4x)");
}

std::vector<std::string> with_profile(std::vector<std::string> overrides, bool full_size) {
  if (full_size) overrides.insert(overrides.begin(), kFullSize);
  return overrides;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-guided image super-resolution toolkit"};
  app.require_subcommand(1);

  tisr::DatasetGenArgs gen_args;
  auto* gen = app.add_subcommand("dataset-gen", "Render a synthetic captioned shape dataset");
  gen->add_option("--out", gen_args.out, "Output directory")->required();
  gen->add_option("--count", gen_args.count, "Number of image/caption pairs");
  gen->add_option("--seed", gen_args.seed, "Generation seed");
  gen->add_option("--splits", gen_args.splits, "train/val/test proportions");
  gen->add_option("--hr-size", gen_args.hr_size, "HR side length in pixels");

  tisr::PretrainArgs pre_args;
  bool pre_full = false;
  auto* pre = app.add_subcommand("pretrain-clip", "Contrastively pretrain the text and image encoders");
  pre->add_option("--data", pre_args.data, "Dataset root")->required();
  pre->add_option("--out-checkpoint", pre_args.out_checkpoint, "Encoder checkpoint to write")->required();
  pre->add_option("--log", pre_args.log, "Loss log (default <checkpoint>.loss.csv)");
  add_config_options(pre, pre_args.config, pre_args.overrides, pre_full);

  tisr::TrainSrArgs train_args;
  bool train_full = false;
  auto* train = app.add_subcommand("train-sr", "Train the super-resolution generator");
  train->add_option("--data", train_args.data, "Dataset root")->required();
  train->add_option("--clip-checkpoint", train_args.clip_checkpoint, "Pretrained encoder checkpoint");
  train->add_option("--out", train_args.out, "Output directory")->required();
  train->add_flag("--resume", train_args.resume, "Continue from <out>/model.ckpt when present");
  add_config_options(train, train_args.config, train_args.overrides, train_full);

  tisr::InferArgs infer_args;
  std::size_t infer_scale = 0;
  auto* infer = app.add_subcommand("infer", "Super-resolve one image");
  infer->add_option("--checkpoint", infer_args.checkpoint, "SR checkpoint")->required();
  infer->add_option("--image", infer_args.image, "LR input (binary PPM)")->required();
  infer->add_option("--caption", infer_args.caption, "Caption describing the image");
  infer->add_option("--scale", infer_scale, "Expected scale factor");
  infer->add_option("--out", infer_args.out, "SR output path")->required();
  infer->add_option("--ground-truth", infer_args.ground_truth, "HR reference for PSNR/SSIM");
  infer->add_flag("--degrade", infer_args.degrade, "Input is HR: downscale it first and score against it");

  tisr::EvalArgs eval_args;
  std::size_t eval_scale = 0;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint and the bicubic baseline");
  eval->add_option("--checkpoint", eval_args.checkpoint, "SR checkpoint")->required();
  eval->add_option("--data", eval_args.data, "Dataset root")->required();
  eval->add_option("--scale", eval_scale, "Expected scale factor");
  eval->add_option("--split", eval_args.split, "Split to evaluate");
  eval->add_option("--report", eval_args.report, "Write the JSON report here");
  eval->add_option("--outputs", eval_args.outputs_dir, "Write SR images here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      tisr::cmd_dataset_gen(gen_args, std::cout);
    } else if (pre->parsed()) {
      pre_args.overrides = with_profile(pre_args.overrides, pre_full);
      tisr::cmd_pretrain_clip(pre_args, std::cout);
    } else if (train->parsed()) {
      train_args.overrides = with_profile(train_args.overrides, train_full);
      tisr::cmd_train_sr(train_args, std::cout);
    } else if (infer->parsed()) {
      if (infer_scale) infer_args.scale = infer_scale;
      tisr::cmd_infer(infer_args, std::cout);
    } else if (eval->parsed()) {
      if (eval_scale) eval_args.scale = eval_scale;
      tisr::cmd_eval(eval_args, std::cout);
    }
  } catch (const tisr::ValidationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
