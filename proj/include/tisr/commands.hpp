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

#include <algorithm>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tisr/persist.hpp"

namespace tisr {

struct DatasetGenArgs {
  fs::path out;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::string splits = "80/10/10";
  std::size_t hr_size = 64;
};

struct PretrainArgs {
  fs::path data;
  fs::path config;  // empty: defaults
  std::vector<std::string> overrides;
  fs::path out_checkpoint;
  fs::path log;  // empty: <out_checkpoint>.loss.csv
};

struct TrainSrArgs {
  fs::path data;
  fs::path clip_checkpoint;
  fs::path config;
  std::vector<std::string> overrides;
  fs::path out;  // directory
  bool resume = false;
};

struct InferArgs {
  fs::path checkpoint;
  fs::path image;
  std::string caption;
  std::optional<std::size_t> scale;
  fs::path out;
  fs::path ground_truth;  // optional
  bool degrade = false;   // treat --image as HR: downscale it first and use it as ground truth
};

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  std::optional<std::size_t> scale;
  std::string split = "test";
  fs::path report;       // empty: stdout only
  fs::path outputs_dir;  // optional: write SR images here
};

namespace detail {

inline void require_matching_data(const DatasetManifest& m, const RunConfig& cfg) {
  if (m.hr_size != cfg.hr_size) {
    throw ValidationError("dataset is " + std::to_string(m.hr_size) + "px but model.hr_size is " +
                          std::to_string(cfg.hr_size));
  }
}

inline void require_scale(const std::optional<std::size_t>& requested, const RunConfig& cfg) {
  if (requested && *requested != cfg.scale) {
    throw ValidationError("--scale " + std::to_string(*requested) + " does not match the checkpoint's scale " +
                          std::to_string(cfg.scale));
  }
}

/// Keeps the header and the rows whose leading step is below `limit`.
inline void truncate_log(const fs::path& path, std::size_t limit) {
  if (!fs::exists(path)) return;
  std::istringstream in(read_file(path));
  std::string line, kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    if (std::stoull(line.substr(0, line.find(','))) < limit) kept += line + "\n";
  }
  write_file_atomic(path, kept);
}

/// Appends one line per call and flushes it.
class CsvLog {
 public:
  CsvLog(const fs::path& path, const std::string& header, bool append) {
    const bool fresh = !append || !fs::exists(path);
    out_.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!out_) throw IoError("cannot open log '" + path.string() + "'");
    if (fresh) out_ << header << "\n";
    out_.flush();
  }
  void row(std::size_t step, const std::vector<double>& values) {
    out_ << step;
    for (double v : values) out_ << ',' << format_double(v);
    out_ << '\n';
    out_.flush();
    if (!out_) throw IoError("log write failed");
  }

 private:
  std::ofstream out_;
};

}  // namespace detail

inline DatasetManifest cmd_dataset_gen(const DatasetGenArgs& a, std::ostream& log) {
  if (a.out.empty()) throw ConfigError("--out is required");
  if (a.count == 0) throw ConfigError("--count must be positive");
  DatasetOptions opt;
  opt.root = a.out;
  opt.count = a.count;
  opt.seed = a.seed;
  opt.hr_size = a.hr_size;
  opt.splits = SplitFractions::parse(a.splits);
  auto m = generate_dataset(opt);
  const auto n = opt.splits.counts(a.count);
  log << "wrote " << a.count << " pairs to " << a.out.string() << " (train " << n[0] << ", val " << n[1] << ", test "
      << n[2] << ")\n";
  return m;
}

inline RetrievalReport cmd_pretrain_clip(const PretrainArgs& a, std::ostream& log) {
  if (a.out_checkpoint.empty()) throw ConfigError("--out-checkpoint is required");
  const RunConfig cfg = load_config(a.config, a.overrides);
  const auto manifest = load_manifest(a.data);
  detail::require_matching_data(manifest, cfg);
  const auto train = load_split(a.data, manifest, "train");
  const auto val = load_split(a.data, manifest, "val");
  if (train.size() < 2) throw InputError("pretraining needs at least 2 training pairs");

  std::vector<std::string> captions;
  for (const auto& s : train) captions.push_back(s.caption);
  auto clip = ClipModel<float>::init(cfg.encoder(), build_vocab(captions), cfg.seed);
  AdamState<float> opt;
  const auto pc = cfg.pretrain();
  const fs::path log_path = a.log.empty() ? fs::path(a.out_checkpoint.string() + ".loss.csv") : a.log;
  detail::CsvLog csv(log_path, "step,loss", false);
  pretrain_clip<float>(clip, opt, make_clip_corpus(train), pc, [&](std::size_t step, double loss) {
    csv.row(step, {loss});
    if (cfg.log_every && step % cfg.log_every == 0) log << "pretrain step " << step << " loss " << loss << "\n";
  });

  RetrievalReport r;
  Checkpoint ck = make_clip_checkpoint(clip, cfg, pc.steps);
  if (val.size() >= pc.batch) {
    r = evaluate_retrieval(clip, make_clip_corpus(val), pc.batch, pc.tau);
    ck.extra["val_top1"] = r.top1;
    ck.extra["val_loss"] = r.loss;
    log << "val retrieval top-1 " << r.top1 << " (batch " << pc.batch << "), loss " << r.loss << "\n";
  } else {
    log << "val split smaller than one batch; retrieval not evaluated\n";
  }
  save_checkpoint(a.out_checkpoint, ck);
  log << "saved encoders to " << a.out_checkpoint.string() << "\n";
  return r;
}

inline fs::path sr_checkpoint_path(const fs::path& out) { return out / "model.ckpt"; }

/// Returns the model as trained. Writes <out>/model.ckpt, loss.csv,
/// probe.csv and config.ini.
inline SrModel<float> cmd_train_sr(const TrainSrArgs& a, std::ostream& log) {
  if (a.out.empty()) throw ConfigError("--out is required");
  const RunConfig cfg = load_config(a.config, a.overrides);
  const auto manifest = load_manifest(a.data);
  detail::require_matching_data(manifest, cfg);

  const fs::path ckpt_path = sr_checkpoint_path(a.out);
  const bool resuming = a.resume && fs::exists(ckpt_path);
  std::optional<ClipModel<float>> clip;
  SrModel<float> m;
  if (resuming) {
    auto loaded = load_sr(ckpt_path, &cfg);
    m = std::move(loaded.model);
    clip = std::move(loaded.clip);
  } else {
    if (cfg.use_text) {
      if (a.clip_checkpoint.empty()) throw ConfigError("the text path needs --clip-checkpoint");
      clip = load_clip(a.clip_checkpoint, &cfg).model;
    }
    m = SrModel<float>::init(cfg.sr());
  }
  ensure_directory(a.out);
  write_file_atomic(a.out / "config.ini", config_to_ini(cfg));

  const auto d = make_sr_dataset(load_split(a.data, manifest, "train"), cfg.scale);
  if (d.size() == 0) throw InputError("training split is empty");
  const ClipModel<float>* cp = clip ? &*clip : nullptr;
  const Vocabulary* vocab = cp ? &cp->vocab : nullptr;
  const auto sr_cfg = cfg.sr();
  const std::size_t total = cfg.total_steps(d.size());

  std::vector<std::size_t> probe_idx(std::min<std::size_t>(8, d.size()));
  std::iota(probe_idx.begin(), probe_idx.end(), 0);
  const auto probe = make_batch<float>(d, probe_idx, vocab, cfg.max_len);

  if (resuming) {
    detail::truncate_log(a.out / "loss.csv", m.step);
    detail::truncate_log(a.out / "probe.csv", m.step + 1);
  }
  detail::CsvLog losses(a.out / "loss.csv", "step,rec,per,adv,disc,total", resuming);
  detail::CsvLog probes(a.out / "probe.csv", "step,probe_rec", resuming);
  log << "train-sr " << cfg.variant() << ": steps " << m.step << ".." << total << " on " << d.size() << " pairs\n";
  if (!resuming) probes.row(0, {probe_rec_loss(m, probe, cp, sr_cfg.gen)});

  while (m.step < total) {
    const std::size_t step = m.step;
    const auto batch = make_batch<float>(d, batch_indices(cfg.seed, step, d.size(), cfg.batch), vocab, cfg.max_len);
    const auto r = train_step(m, batch, cp, sr_cfg);
    losses.row(step, {r.rec, r.per, r.adv, r.disc, r.total});
    const bool last = m.step == total;
    if ((cfg.log_every && m.step % cfg.log_every == 0) || last) {
      const double p = probe_rec_loss(m, probe, cp, sr_cfg.gen);
      probes.row(m.step, {p});
      log << "step " << step << " rec " << r.rec << " per " << r.per << " adv " << r.adv << " disc " << r.disc
          << " total " << r.total << " probe_rec " << p << "\n";
    }
    if ((cfg.checkpoint_every && m.step % cfg.checkpoint_every == 0) || last) {
      save_checkpoint(ckpt_path, make_sr_checkpoint(m, cp, cfg));
    }
  }
  if (!fs::exists(ckpt_path)) save_checkpoint(ckpt_path, make_sr_checkpoint(m, cp, cfg));
  log << "saved " << ckpt_path.string() << " at step " << m.step << "\n";
  return m;
}

/// Super-resolves one LR image. Returns the SR image.
inline ImageBuffer cmd_infer(const InferArgs& a, std::ostream& log) {
  if (a.out.empty()) throw ConfigError("--out is required");
  const auto loaded = load_sr(a.checkpoint);
  const auto& cfg = loaded.config;
  detail::require_scale(a.scale, cfg);
  const ImageBuffer input = read_image(a.image);
  if (a.degrade && (input.height() != cfg.hr_size || input.width() != cfg.hr_size)) {
    throw ValidationError("--degrade expects a " + std::to_string(cfg.hr_size) + "x" + std::to_string(cfg.hr_size) +
                          " image");
  }
  const ImageBuffer lr = a.degrade ? degrade(input, cfg.scale) : input;
  if (lr.height() != cfg.lr_size() || lr.width() != cfg.lr_size()) {
    throw ValidationError("input is " + std::to_string(lr.width()) + "x" + std::to_string(lr.height()) +
                          " but the checkpoint expects " + std::to_string(cfg.lr_size()) + "x" +
                          std::to_string(cfg.lr_size()) + " at scale " + std::to_string(cfg.scale));
  }
  if (cfg.use_text && split_words(a.caption).empty()) throw InputError("--caption is required for this checkpoint");
  NoGradGuard ng;
  const auto sr = generate(to_tensor<float>(lr), a.caption, loaded.model.gen, loaded.clip ? &*loaded.clip : nullptr);
  const ImageBuffer out = quantized(from_tensor(reshape(sr, Shape{1, 3, sr.dim(1), sr.dim(2)}), 0));
  write_image(a.out, out);
  log << "wrote " << out.width() << "x" << out.height() << " image to " << a.out.string() << "\n";
  if (!a.ground_truth.empty() || a.degrade) {
    const ImageBuffer gt = a.ground_truth.empty() ? input : read_image(a.ground_truth);
    if (gt.height() != out.height() || gt.width() != out.width()) {
      throw ValidationError("ground truth size does not match the output");
    }
    log << "psnr " << psnr(out, gt) << " ssim " << ssim(out, gt) << "\n";
  }
  return out;
}

inline nlohmann::ordered_json eval_report_json(const EvalReport& r, const RunConfig& cfg, const std::string& split) {
  nlohmann::ordered_json j;
  j["format"] = "tisr-eval";
  j["variant"] = cfg.variant();
  j["scale"] = cfg.scale;
  j["split"] = split;
  j["count"] = r.count;
  j["rows"] = nlohmann::ordered_json::array({
      {{"method", "model"}, {"psnr", r.model_psnr}, {"ssim", r.model_ssim}},
      {{"method", "bicubic"}, {"psnr", r.bicubic_psnr}, {"ssim", r.bicubic_ssim}},
  });
  return j;
}

inline EvalReport cmd_eval(const EvalArgs& a, std::ostream& log) {
  const auto loaded = load_sr(a.checkpoint);
  const auto& cfg = loaded.config;
  detail::require_scale(a.scale, cfg);
  const auto manifest = load_manifest(a.data);
  detail::require_matching_data(manifest, cfg);
  if (std::find(kSplits.begin(), kSplits.end(), a.split) == kSplits.end()) {
    throw ConfigError("unknown split '" + a.split + "'");
  }
  const auto d = make_sr_dataset(load_split(a.data, manifest, a.split), cfg.scale);
  if (d.size() == 0) throw InputError("split '" + a.split + "' is empty");
  std::vector<ImageBuffer> outputs;
  const auto r = evaluate(loaded.model.gen, loaded.clip ? &*loaded.clip : nullptr, d, 16,
                          a.outputs_dir.empty() ? nullptr : &outputs);
  const std::string text = eval_report_json(r, cfg, a.split).dump(2) + "\n";
  if (!a.report.empty()) write_file_atomic(a.report, text);
  if (!a.outputs_dir.empty()) {
    ensure_directory(a.outputs_dir);
    const auto entries = manifest.split(a.split);
    for (std::size_t i = 0; i < outputs.size(); ++i) write_image(a.outputs_dir / (entries[i]->id + ".ppm"), outputs[i]);
  }
  log << text;
  return r;
}

}  // namespace tisr
