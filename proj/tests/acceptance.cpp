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

// Acceptance run: prints one PASS/FAIL line per criterion (1-10).
//
//   acceptance [--work DIR] [--only 1,5,9] [--reuse] [--known-fail 8]
//
// Exit status is nonzero when a criterion fails that is not listed in
// --known-fail. Listed criteria still print FAIL; the flag only affects the
// exit status.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "grad_suite.hpp"
#include "tisr/commands.hpp"

namespace tisr {
namespace {

using Clock = std::chrono::steady_clock;
using Td = Tensor<double>;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  bool reuse = false;
  std::ofstream log;

  fs::path path(const std::string& name) const { return work / name; }
};

// Shared artifacts -----------------------------------------------------------

constexpr std::size_t kSrSteps = 2000;

/// 1000-pair corpus, encoders pretrained on its train split, full model
/// trained for kSrSteps. Built once and shared by criteria 6, 7 and 8.
struct SrArtifacts {
  fs::path data, clip, full_dir, v1_dir;
  double full_train_seconds = -1;
  double v1_train_seconds = -1;
  bool full_ready = false;
  bool v1_ready = false;
};

SrArtifacts& sr_artifacts(Context& ctx) {
  static SrArtifacts a;
  static bool ready = false;
  if (ready) return a;
  a.data = ctx.path("sr_data");
  a.clip = ctx.path("sr_clip.ckpt");
  a.full_dir = ctx.path("sr_full");
  a.v1_dir = ctx.path("sr_variant1");
  if (!(ctx.reuse && fs::exists(a.data / "manifest.json"))) {
    cmd_dataset_gen({a.data, 1000, 2, "80/10/10", 64}, ctx.log);
  }
  if (!(ctx.reuse && fs::exists(a.clip))) {
    PretrainArgs p;
    p.data = a.data;
    p.out_checkpoint = a.clip;
    p.overrides = {"train.seed=2"};
    cmd_pretrain_clip(p, ctx.log);
  }
  ready = true;
  return a;
}

bool trained(const fs::path& dir, std::size_t steps) {
  const auto ckpt = sr_checkpoint_path(dir);
  return fs::exists(ckpt) && decode_checkpoint_header(read_file(ckpt)).meta.step == steps;
}

void train_full(Context& ctx, SrArtifacts& a) {
  if (a.full_ready || (ctx.reuse && trained(a.full_dir, kSrSteps))) {
    a.full_ready = true;
    return;
  }
  fs::remove_all(a.full_dir);
  TrainSrArgs t;
  t.data = a.data;
  t.clip_checkpoint = a.clip;
  t.out = a.full_dir;
  t.overrides = {"train.seed=2", "train.steps=" + std::to_string(kSrSteps)};
  const auto t0 = Clock::now();
  cmd_train_sr(t, ctx.log);
  a.full_train_seconds = seconds_since(t0);
  a.full_ready = true;
}

void train_variant1(Context& ctx, SrArtifacts& a) {
  if (a.v1_ready || (ctx.reuse && trained(a.v1_dir, kSrSteps))) {
    a.v1_ready = true;
    return;
  }
  fs::remove_all(a.v1_dir);
  TrainSrArgs t;
  t.data = a.data;
  t.out = a.v1_dir;
  t.overrides = {"train.seed=2", "train.steps=" + std::to_string(kSrSteps), "ablation.use_text=false",
                 "ablation.use_vit=false", "ablation.use_discriminator=false"};
  const auto t0 = Clock::now();
  cmd_train_sr(t, ctx.log);
  a.v1_train_seconds = seconds_since(t0);
  a.v1_ready = true;
}

EvalReport eval_dir(Context& ctx, const fs::path& dir, const fs::path& data) {
  EvalArgs e;
  e.checkpoint = sr_checkpoint_path(dir);
  e.data = data;
  e.report = dir / "eval.json";
  return cmd_eval(e, ctx.log);
}

// Criteria -------------------------------------------------------------------

Outcome gradient_suite(Context&) {
  const auto t0 = Clock::now();
  std::size_t ops = 0, composed = 0, failed = 0;
  double worst_op = 0, worst_composed = 0;
  std::string failures;
  for (const auto& c : testing::op_grad_cases()) {
    const auto r = c.run();
    ++ops;
    worst_op = std::max(worst_op, r.max_rel_error);
    if (r.checked == 0 || r.max_rel_error > c.tolerance) ++failed, failures += " " + c.name;
  }
  for (const auto& c : testing::composed_grad_cases()) {
    const auto r = c.run();
    ++composed;
    worst_composed = std::max(worst_composed, r.max_rel_error);
    if (r.checked == 0 || r.max_rel_error > c.tolerance) ++failed, failures += " " + c.name;
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs <= 120,
          fmt("%zu op cases (max rel err %.2e <= 1e-5), %zu composed probes (max %.2e <= 1e-3), %.1fs%s", ops, worst_op,
              composed, worst_composed, secs, failures.empty() ? "" : (" failing:" + failures).c_str())};
}

Outcome affine_fidelity(Context&) {
  bool ok = true;
  std::string notes;
  // Hand example: channels (1, 2), gamma (2, 0.5), beta (1, -1) -> (3, 0).
  {
    Td f({1, 2, 2, 2}, {1, 1, 1, 1, 2, 2, 2, 2});
    ChannelModulation<double> mod{Td({1, 2}, {2, 0.5}), Td({1, 2}, {1, -1})};
    const auto out = affine_modulate_with(f, mod);
    for (std::size_t i = 0; i < 4; ++i) ok &= out[i] == 3.0 && out[4 + i] == 0.0;
    const auto ident = affine_modulate_with(f, {Td({1, 2}, {1, 1}), Td({1, 2}, {0, 0})});
    ok &= ident.values() == f.values();
    const auto zero = affine_modulate_with(f, {Td({1, 2}, {0, 0}), Td({1, 2}, {0.25, -4})});
    for (std::size_t i = 0; i < 4; ++i) ok &= zero[i] == 0.25 && zero[4 + i] == -4.0;
    notes += ok ? "hand examples exact" : "hand examples MISMATCH";
  }
  // Two-point linearity with a learned modulation: out(a*f) - out(0) == a*(out(f) - out(0)).
  // Dyadic inputs keep every product and sum exactly representable.
  {
    GeneratorConfig g = testing::detail::composed_probe_config();
    const auto gen = Generator<double>::init(g, 21);
    const auto& stage = gen.refinement.stages[0].tif.affine1;
    Prng rng(22);
    auto ft = Td::randn({1, g.text_dim}, rng);
    auto mod = modulation_from_text(ft, stage);
    // Round gamma/beta to dyadic values so the check is exact in binary64.
    std::vector<double> gd(mod.gamma.values()), bd(mod.beta.values());
    for (auto& v : gd) v = std::round(v * 1024) / 1024;
    for (auto& v : bd) v = std::round(v * 1024) / 1024;
    ChannelModulation<double> dy{Td(mod.gamma.shape(), gd), Td(mod.beta.shape(), bd)};
    std::vector<double> fd(g.channels * 64);
    for (auto& v : fd) v = std::round(rng.normal() * 256) / 256;
    const Td f({1, g.channels, 8, 8}, fd);
    const auto base = affine_modulate_with(f, dy);
    const auto zero = affine_modulate_with(Td::zeros(f.shape()), dy);
    bool exact = true;
    for (double a : {2.0, -3.0, 0.5}) {
      const auto scaled = affine_modulate_with(scale(f, a), dy);
      for (std::size_t i = 0; i < f.numel(); ++i) exact &= (scaled[i] - zero[i]) == a * (base[i] - zero[i]);
    }
    // Learned (non-dyadic) modulation through the public entry point.
    const auto lb = affine_modulate(f, ft, stage);
    const auto lz = affine_modulate(Td::zeros(f.shape()), ft, stage);
    const auto l2 = affine_modulate(scale(f, 2.0), ft, stage);
    double worst = 0;
    for (std::size_t i = 0; i < f.numel(); ++i) worst = std::max(worst, std::abs((l2[i] - lz[i]) - 2 * (lb[i] - lz[i])));
    ok &= exact && worst <= 1e-13;
    notes += fmt("; linearity exact on dyadic modulation: %s; learned MLP modulation max deviation %.1e",
                 exact ? "yes" : "NO", worst);
  }
  return {ok, notes};
}

Outcome pixel_shuffle_oracle(Context&) {
  std::size_t shapes = 0, bad = 0;
  Prng rng(31);
  for (std::size_t r : {1u, 2u})
    for (std::size_t n = 1; n <= 4; ++n)
      for (std::size_t c = 1; c <= 4; ++c)
        for (std::size_t h = 1; h <= 4; ++h)
          for (std::size_t w = 1; w <= 4; ++w) {
            if (c % (r * r) == 0) {
              const auto x = Td::randn({n, c, h, w}, rng);
              const auto y = pixel_shuffle(x, r);
              const std::size_t co = c / (r * r);
              bool ok = y.shape() == Shape{n, co, h * r, w * r};
              for (std::size_t b = 0; ok && b < n; ++b)
                for (std::size_t k = 0; k < co; ++k)
                  for (std::size_t i = 0; i < h * r; ++i)
                    for (std::size_t j = 0; j < w * r; ++j) {
                      const std::size_t src = ((b * c + k * r * r + (i % r) * r + (j % r)) * h + i / r) * w + j / r;
                      ok &= y[((b * co + k) * h * r + i) * w * r + j] == x[src];
                    }
              ok &= pixel_unshuffle(y, r).values() == x.values();
              ++shapes;
              bad += !ok;
            }
            if (h % r == 0 && w % r == 0) {
              const auto x = Td::randn({n, c, h, w}, rng);
              const bool ok = pixel_shuffle(pixel_unshuffle(x, r), r).values() == x.values();
              ++shapes;
              bad += !ok;
            }
          }
  return {bad == 0, fmt("%zu shape/factor combinations, %zu mismatches", shapes, bad)};
}

Outcome scale_wiring(Context&) {
  bool ok = true;
  std::string notes;
  const auto vocab = build_vocab({"a red square on a blue background"});
  for (std::size_t s : {4u, 8u, 16u}) {
    GeneratorConfig g = testing::detail::composed_probe_config();
    g.depth = 4;
    g.scale = s;
    g.lr_size = 16;
    EncoderConfig e;
    e.text_dim = g.text_dim;
    e.vit_dim = g.vit_dim;
    e.text_blocks = 1;
    e.vit_blocks = 1;
    e.vit_mlp = 12;
    e.image_size = 16 * s;
    const auto clip = ClipModel<float>::init(e, vocab, 3);
    GeneratorConfig gf = g;
    const auto gen = Generator<float>::init(gf, 3);
    Prng rng(s);
    NoGradGuard ng;
    const auto out = generate(Tensor<float>::uniform({3, 16, 16}, rng, 0, 1), "a red square on a blue background",
                              gen, &clip);
    const bool shape_ok = out.shape() == Shape{3, 16 * s, 16 * s};
    const bool blocks_ok = gen.upsampler.blocks.size() == static_cast<std::size_t>(std::log2(s));
    ok &= shape_ok && blocks_ok;
    notes += fmt("%sx%zu: %zux%zu, %zu blocks", notes.empty() ? "" : "; ", s, out.dim(1), out.dim(2),
                 gen.upsampler.blocks.size());
  }
  return {ok, notes};
}

std::vector<double> read_csv_column(const fs::path& path, std::size_t column, std::vector<std::size_t>* steps) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (steps) steps->push_back(std::stoull(cells.at(0)));
    out.push_back(std::stod(cells.at(column)));
  }
  return out;
}

Outcome contrastive_pretraining(Context& ctx) {
  const auto data = ctx.path("clip_data");
  const auto ckpt = ctx.path("clip512.ckpt");
  if (!(ctx.reuse && fs::exists(data / "manifest.json"))) cmd_dataset_gen({data, 512, 1, "80/10/10", 64}, ctx.log);
  const auto t0 = Clock::now();
  if (!(ctx.reuse && fs::exists(ckpt))) {
    PretrainArgs p;
    p.data = data;
    p.out_checkpoint = ckpt;
    p.overrides = {"train.seed=1"};
    cmd_pretrain_clip(p, ctx.log);
  }
  const double secs = seconds_since(t0);
  const auto loaded = load_clip(ckpt);
  const auto manifest = load_manifest(data);
  auto held = load_split(data, manifest, "val");
  const auto test = load_split(data, manifest, "test");
  held.insert(held.end(), test.begin(), test.end());
  const auto r = evaluate_retrieval(loaded.model, make_clip_corpus(held), 16, loaded.config.tau);
  const auto losses = read_csv_column(fs::path(ckpt.string() + ".loss.csv"), 1, nullptr);
  const std::size_t steps = losses.size();
  const bool loss_falls = steps > 500 && losses[500] < losses[10];
  // Reloading the checkpoint reproduces the held-out loss.
  const auto again = evaluate_retrieval(load_clip(ckpt).model, make_clip_corpus(held), 16, loaded.config.tau);
  const bool ok = r.top1 >= 0.25 && steps <= 2000 && secs <= 600 && loss_falls && again.loss == r.loss;
  return {ok, fmt("held-out top-1 %.3f over %zu batches of 16 (chance 0.0625) after %zu steps, %.0fs; loss step10 "
                  "%.3f -> step500 %.3f; reload loss identical: %s",
                  r.top1, r.batches, steps, secs, losses.at(10), steps > 500 ? losses[500] : -1.0,
                  again.loss == r.loss ? "yes" : "no")};
}

Outcome sr_convergence(Context& ctx) {
  auto& a = sr_artifacts(ctx);
  train_full(ctx, a);
  std::vector<std::size_t> steps;
  const auto probe = read_csv_column(a.full_dir / "probe.csv", 1, &steps);
  const double first = probe.front();
  double best_within = first;
  for (std::size_t i = 0; i < probe.size(); ++i)
    if (steps[i] <= 2000) best_within = std::min(best_within, probe[i]);
  const double last = probe.back();
  const auto r = eval_dir(ctx, a.full_dir, a.data);
  const bool time_ok = a.full_train_seconds < 0 || a.full_train_seconds <= 1200;
  const bool ok = last <= 0.5 * first && r.model_psnr >= r.bicubic_psnr + 1.0 && time_ok;
  return {ok, fmt("probe L_rec %.4f -> %.4f at step %zu (%.0f%% drop); test PSNR %.2f dB vs bicubic %.2f dB "
                  "(+%.2f); SSIM %.3f vs %.3f; training %s",
                  first, last, steps.back(), 100 * (1 - last / first), r.model_psnr, r.bicubic_psnr,
                  r.model_psnr - r.bicubic_psnr, r.model_ssim, r.bicubic_ssim,
                  a.full_train_seconds < 0 ? "reused" : fmt("%.0fs", a.full_train_seconds).c_str())};
}

std::string swap_color(const SceneSpec& s) {
  const std::size_t from = palette_index(s.color);
  for (std::size_t k = 1; k < kPalette.size(); ++k) {
    const auto& cand = kPalette[(from + k) % kPalette.size()];
    if (cand.name != s.background) return std::string(cand.name);
  }
  return s.color;
}

Outcome editability(Context& ctx) {
  auto& a = sr_artifacts(ctx);
  train_full(ctx, a);
  const auto loaded = load_sr(sr_checkpoint_path(a.full_dir));
  const auto& cfg = loaded.config;
  const auto manifest = load_manifest(a.data);
  const auto test = load_split(a.data, manifest, "test");
  NoGradGuard ng;
  std::size_t toward = 0, scenes = 0;
  double mean_shift = 0;
  bool reproducible = true;
  for (std::size_t i = 0; i < 10 && i < test.size(); ++i, ++scenes) {
    const auto& s = test[i];
    const auto lr = to_tensor<float>(degrade(s.hr, cfg.scale));
    const std::string target = swap_color(s.scene);
    const Rgb& target_rgb = palette_rgb(target);
    const auto box = s.scene.bbox(cfg.hr_size);
    auto render = [&](const std::string& caption) {
      const auto t = generate(lr, caption, loaded.model.gen, &*loaded.clip);
      return quantized(from_tensor(reshape(t, Shape{1, 3, t.dim(1), t.dim(2)}), 0));
    };
    const auto original = render(s.caption);
    const auto swapped = render(with_color(s.scene, target));
    const double d0 = rgb_distance(region_mean_color(original, box), target_rgb);
    const double d1 = rgb_distance(region_mean_color(swapped, box), target_rgb);
    toward += d1 < d0;
    mean_shift += d0 - d1;
    reproducible &= render(s.caption) == original;
  }
  mean_shift /= static_cast<double>(scenes);
  return {toward >= 8 && reproducible,
          fmt("%zu/%zu scenes move toward the named color (mean distance reduction %.2e); same caption rerun "
              "bit-identical: %s",
              toward, scenes, mean_shift, reproducible ? "yes" : "no")};
}

Outcome ablation_direction(Context& ctx) {
  auto& a = sr_artifacts(ctx);
  train_full(ctx, a);
  train_variant1(ctx, a);
  const auto full = eval_dir(ctx, a.full_dir, a.data);
  const auto v1 = eval_dir(ctx, a.v1_dir, a.data);
  return {v1.model_psnr < full.model_psnr,
          fmt("variant-1 (no text) %.2f dB vs full %.2f dB after %zu steps each (bicubic %.2f dB)", v1.model_psnr,
              full.model_psnr, kSrSteps, full.bicubic_psnr)};
}

Outcome loss_wiring(Context&) {
  bool ok = true;
  std::string notes;
  LossWeights w;
  Prng rng(41);
  bool exact = true;
  for (int i = 0; i < 100; ++i) {
    const double rec = rng.uniform(0, 1), per = rng.uniform(0, 1), adv = rng.uniform(-5, 5);
    const auto t = total_loss(Td::scalar(rec), Td::scalar(per), Td::scalar(adv), w);
    exact &= t.item() == (rec + per) + 0.01 * adv;
  }
  ok &= exact && w.lambda_adv == 0.01 && w.alpha == 4.0;
  notes += fmt("total = rec + per + 0.01*adv bit-exact over 100 draws: %s", exact ? "yes" : "NO");

  // alpha = 4 term isolation.
  const Td scores({4}, {0.5, -1.0, 2.0, 0.25});
  const Td sims({4}, {0.1, 0.9, -0.3, 0.6});
  const Td zeros = Td::zeros({4});
  const double only_d = adv_loss_from_terms(scores, zeros, 4.0).item();
  const double only_c = adv_loss_from_terms(zeros, sims, 4.0).item();
  const double both = adv_loss_from_terms(scores, sims, 4.0).item();
  const bool iso = std::abs(only_d - (-0.4375)) < 1e-15 && std::abs(only_c - (-4.0 * 0.325)) < 1e-15 &&
                   std::abs(both - (only_d + only_c)) < 1e-15;
  ok &= iso;
  notes += fmt("; alpha term isolation: %s", iso ? "yes" : "NO");

  // Frozen modules over 100 train steps on a small model.
  RunConfig cfg;
  cfg.channels = 4;
  cfg.text_dim = 8;
  cfg.vit_dim = 8;
  cfg.text_blocks = 1;
  cfg.vit_blocks = 1;
  cfg.vit_mlp = 12;
  cfg.affine_hidden = 6;
  cfg.disc_hidden = 6;
  cfg.prompts = 2;
  cfg.batch = 2;
  std::vector<Sample> samples;
  Prng srng(42);
  for (int i = 0; i < 8; ++i) {
    auto scene = random_scene(srng);
    samples.push_back({render_scene(scene, 64), scene.caption(), scene});
  }
  const auto d = make_sr_dataset(samples, 4);
  auto clip = ClipModel<float>::init(cfg.encoder(), build_vocab(d.captions), 43);
  clip.parameters().set_requires_grad(false);
  auto m = SrModel<float>::init(cfg.sr());
  ParamSet<float> frozen = clip.parameters();
  m.phi.collect(frozen, "phi");
  std::vector<std::vector<float>> before;
  for (const auto& p : frozen) before.push_back(p.tensor.values());
  double grad_mass = 0;
  for (std::size_t s = 0; s < 100; ++s) {
    const auto b = make_batch<float>(d, batch_indices(cfg.seed, s, d.size(), cfg.batch), &clip.vocab, cfg.max_len);
    train_step(m, b, &clip, cfg.sr());
    for (const auto& p : frozen)
      if (p.tensor.has_grad())
        for (float g : p.tensor.grad()) grad_mass += std::abs(g);
  }
  bool unchanged = true;
  std::size_t i = 0;
  for (const auto& p : frozen) unchanged &= p.tensor.values() == before[i++];
  ok &= grad_mass == 0 && unchanged;
  notes += fmt("; frozen encoders + perceptual net over 100 steps: grad mass %.1f, weights unchanged: %s", grad_mass,
               unchanged ? "yes" : "NO");
  return {ok, notes};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(TISR_CLI_PATH) + " " + args + " >>'" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  return files;
}

Outcome reproducibility(Context& ctx) {
  const fs::path log = ctx.path("repro.log");
  std::vector<std::map<std::string, std::string>> runs;
  bool rc_ok = true;
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = ctx.path("repro_" + std::to_string(k));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string q = "'" + dir.string() + "/";
    rc_ok &= run_cli("dataset-gen --out " + q + "data' --count 40 --seed 7", log) == 0;
    rc_ok &= run_cli("pretrain-clip --data " + q + "data' --out-checkpoint " + q +
                         "clip.ckpt' --set pretrain.steps=20 --set train.seed=7",
                     log) == 0;
    rc_ok &= run_cli("train-sr --data " + q + "data' --clip-checkpoint " + q + "clip.ckpt' --out " + q +
                         "run' --set train.steps=100 --set train.seed=7",
                     log) == 0;
    rc_ok &= run_cli("infer --checkpoint " + q + "run/model.ckpt' --image " + q +
                         "data/test/000039.ppm' --degrade --caption 'a red circle on a white background' --out " + q +
                         "sr.ppm'",
                     log) == 0;
    runs.push_back(tree(dir));
  }
  std::size_t differing = 0;
  std::string which;
  for (const auto& [name, bytes] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) ++differing, which += " " + name;
  }
  const bool ok = rc_ok && differing == 0 && runs[0].size() == runs[1].size() && runs[0].count("run/model.ckpt") &&
                  runs[0].count("sr.ppm");
  return {ok, fmt("%zu files compared across two runs (dataset, encoder and SR checkpoints, loss logs, SR image); "
                  "%zu differ%s",
                  runs[0].size(), differing, which.c_str())};
}

}  // namespace
}  // namespace tisr

int main(int argc, char** argv) {
  using namespace tisr;
  Context ctx;
  ctx.work = fs::temp_directory_path() / "tisr_acceptance";
  std::set<int> only, known_fail;
  auto parse_list = [](const std::string& s, std::set<int>& out) {
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
  };
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work" && i + 1 < argc) ctx.work = argv[++i];
    else if (arg == "--only" && i + 1 < argc) parse_list(argv[++i], only);
    else if (arg == "--known-fail" && i + 1 < argc) parse_list(argv[++i], known_fail);
    else if (arg == "--reuse") ctx.reuse = true;
    else {
      std::cerr << "usage: acceptance [--work DIR] [--only 1,2] [--known-fail 8] [--reuse]\n";
      return 2;
    }
  }
  if (!ctx.reuse) fs::remove_all(ctx.work);
  fs::create_directories(ctx.work);
  ctx.log.open(ctx.work / "acceptance.log", std::ios::app);

  const std::vector<std::pair<std::string, Outcome (*)(Context&)>> criteria{
      {"gradient suite", gradient_suite},
      {"affine modulation fidelity", affine_fidelity},
      {"pixel shuffle oracle", pixel_shuffle_oracle},
      {"scale wiring", scale_wiring},
      {"contrastive pretraining", contrastive_pretraining},
      {"SR training convergence", sr_convergence},
      {"editability", editability},
      {"ablation direction", ablation_direction},
      {"loss wiring", loss_wiring},
      {"reproducibility", reproducibility},
  };
  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << id << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << " | "
              << o.detail << " [" << fmt("%.0fs", seconds_since(t0)) << "]" << std::endl;
    if (!o.pass && !known_fail.count(id)) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
