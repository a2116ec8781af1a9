// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "vqlm/config.h"
#include "vqlm/datagen.h"
#include "vqlm/errors.h"
#include "vqlm/eval.h"
#include "vqlm/log.h"
#include "vqlm/media.h"
#include "vqlm/model.h"
#include "vqlm/training.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file (defaults to the desk preset)");
  cmd->add_option("--set", opts.overrides, "dotted-path override, e.g. training.steps=100");
  cmd->add_option("--seed", opts.seed, "overrides training.seed and datagen.seed");
}

struct Resolved {
  vqlm::AppConfig cfg;
  json raw;
  bool has_model_keys = false;
};

Resolved resolve_config(const CommonOpts& opts) {
  Resolved r;
  if (opts.config_path.empty()) {
    r.raw = vqlm::to_json(vqlm::desk_config());
  } else {
    std::ifstream f(opts.config_path);
    if (!f) throw vqlm::IoError("cannot open config: " + opts.config_path);
    try {
      f >> r.raw;
    } catch (const json::exception& e) {
      throw vqlm::ConfigError("cannot parse config " + opts.config_path + ": " + e.what());
    }
    for (const char* key : {"media", "encoder_high", "encoder_low", "decoder", "head"}) {
      if (r.raw.contains(key)) r.has_model_keys = true;
    }
  }
  for (const auto& kv : opts.overrides) {
    vqlm::apply_override(r.raw, kv);
    for (const char* key : {"media", "encoder_high", "encoder_low", "decoder", "head"}) {
      if (kv.rfind(key, 0) == 0) r.has_model_keys = true;
    }
  }
  r.cfg = vqlm::app_config_from_json(r.raw);
  if (opts.seed.has_value()) {
    r.cfg.training.seed = *opts.seed;
    r.cfg.datagen.seed = *opts.seed;
  }
  return r;
}

// Every run log begins with the fully resolved configuration.
std::ofstream open_run_log(const std::string& out_dir, const vqlm::AppConfig& cfg) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw vqlm::IoError("cannot create output dir: " + out_dir);
  std::ofstream log((fs::path(out_dir) / "run.log").string(), std::ios::trunc);
  if (!log) throw vqlm::IoError("cannot open run log in " + out_dir);
  log << "config: " << vqlm::to_json(cfg).dump(2) << "\n";
  log.flush();
  return log;
}

vqlm::media::VideoClip load_video(const std::string& path, const std::string& decode_cmd) {
  if (fs::is_directory(path)) {
    return vqlm::media::read_clip_dir(path);
  }
  if (decode_cmd.empty()) {
    throw vqlm::InputError("'" + path +
                           "' is not a clip directory; pass --decode-cmd to decode files");
  }
  const std::string work =
      (fs::temp_directory_path() / ("vqlm_decode_" + std::to_string(::getpid()))).string();
  return vqlm::media::decode_with_command(decode_cmd, path, work);
}

double quick_heldout_srcc(vqlm::training::Trainer& trainer,
                          const vqlm::datagen::DatasetManifest& manifest) {
  std::vector<double> pred, gt;
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    if (manifest.records[i].split != "test") continue;
    pred.push_back(trainer.score_record(static_cast<int>(i)));
    gt.push_back(manifest.records[i].mos);
  }
  if (pred.size() < 2) return 0.0;
  try {
    return vqlm::eval::srcc(pred, gt);
  } catch (const vqlm::InputError&) {
    return 0.0;
  }
}

int cmd_gen_data(const CommonOpts& common, const std::string& out_dir, bool force) {
  Resolved r = resolve_config(common);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
    throw vqlm::IoError("output dir exists and is not empty (use --force): " + out_dir);
  }
  std::ofstream log = open_run_log(out_dir, r.cfg);
  const auto manifest = vqlm::datagen::build_corpus(r.cfg.datagen, out_dir);
  int originals = 0;
  for (const auto& rec : manifest.records) originals += rec.is_original ? 1 : 0;
  const std::string manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
  std::cout << "manifest: " << manifest_path << "\n"
            << "records: " << manifest.records.size() << " (" << originals << " originals, "
            << manifest.records.size() - originals << " variants)\n";
  log << "manifest: " << manifest_path << "\nrecords: " << manifest.records.size() << "\n";
  return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data, const std::string& out_dir) {
  Resolved r = resolve_config(common);
  std::ofstream log = open_run_log(out_dir, r.cfg);
  const auto manifest = vqlm::datagen::read_manifest(data);
  vqlm::Model model(r.cfg.model, r.cfg.training.seed);
  vqlm::training::Trainer trainer(model, r.cfg, manifest);

  std::ofstream csv((fs::path(out_dir) / "train_log.csv").string(), std::ios::trunc);
  if (!csv) throw vqlm::IoError("cannot open train log in " + out_dir);
  csv << "step,l1,l2,l3,total,lr\n";
  for (int s = 0; s < r.cfg.training.steps; ++s) {
    const auto stats = trainer.step();
    if (stats.non_finite) {
      std::string ids;
      for (const auto& o : stats.offenders) ids += (ids.empty() ? "" : ", ") + o;
      throw vqlm::NumericError("non-finite loss at step " + std::to_string(stats.step) +
                               " (samples: " + ids + ")");
    }
    csv << stats.step << "," << stats.l1 << "," << stats.l2 << "," << stats.l3 << ","
        << stats.total << "," << stats.lr << "\n";
    csv.flush();
    if (r.cfg.training.log_every > 0 && stats.step % r.cfg.training.log_every == 0) {
      VQLM_INFO("step %d/%d total=%.4f (l1=%.4f l2=%.4f l3=%.4f)", stats.step,
                r.cfg.training.steps, stats.total, stats.l1, stats.l2, stats.l3);
    }
    if (r.cfg.training.eval_every > 0 && stats.step % r.cfg.training.eval_every == 0) {
      const double s_test = quick_heldout_srcc(trainer, manifest);
      VQLM_INFO("step %d held-out srcc=%.4f", stats.step, s_test);
      log << "step " << stats.step << " heldout_srcc " << s_test << "\n";
      log.flush();
    }
  }
  const std::string ckpt = (fs::path(out_dir) / "model.ckpt").string();
  vqlm::save_checkpoint(model, ckpt);
  std::cout << "checkpoint: " << ckpt << "\n";
  log << "checkpoint: " << ckpt << "\n";
  return 0;
}

struct FrLimit {
  int diff;
  double max_fr;
};

int cmd_eval(const CommonOpts& common, const std::string& ckpt, const std::string& data,
             const std::string& out_dir, const std::string& split,
             std::optional<double> min_srcc, std::optional<double> min_plcc,
             const std::vector<std::string>& max_fr_specs) {
  Resolved r = resolve_config(common);
  vqlm::Model model = vqlm::load_checkpoint(ckpt);
  if (r.has_model_keys) {
    const std::string diff = vqlm::model_config_diff(model.config(), r.cfg.model);
    if (!diff.empty()) {
      throw vqlm::ConfigError("checkpoint was trained with a different " + diff +
                              "; refusing to eval against this config");
    }
  }
  std::vector<FrLimit> fr_limits;
  for (const auto& spec : max_fr_specs) {
    const size_t colon = spec.find(':');
    if (colon == std::string::npos) {
      throw vqlm::ConfigError("--max-fr expects DIFF:VALUE, got '" + spec + "'");
    }
    fr_limits.push_back({std::stoi(spec.substr(0, colon)), std::stod(spec.substr(colon + 1))});
  }
  std::ofstream log = open_run_log(out_dir, r.cfg);
  const auto manifest = vqlm::datagen::read_manifest(data);
  vqlm::eval::BenchmarkOptions options;
  options.eval = r.cfg.eval;
  options.split = split;
  options.out_dir = out_dir;
  options.dataset_id = fs::path(data).parent_path().filename().string() + "/" + split;
  const auto report = vqlm::eval::run_benchmark(model, manifest, options);
  const std::string text = vqlm::eval::format_report(report);
  std::cout << text;
  log << text;

  int violations = 0;
  auto violate = [&](const std::string& what) {
    std::cerr << "threshold violated: " << what << "\n";
    log << "threshold violated: " << what << "\n";
    ++violations;
  };
  if (min_srcc && (!report.srcc_error.empty() || report.srcc < *min_srcc)) {
    violate("srcc >= " + std::to_string(*min_srcc));
  }
  if (min_plcc && (!report.plcc_error.empty() || report.plcc < *min_plcc)) {
    violate("plcc >= " + std::to_string(*min_plcc));
  }
  for (const auto& lim : fr_limits) {
    auto it = report.fr_by_diff.find(lim.diff);
    if (it == report.fr_by_diff.end() || it->second > lim.max_fr) {
      violate("fr[diff=" + std::to_string(lim.diff) + "] <= " + std::to_string(lim.max_fr));
    }
  }
  return violations == 0 ? 0 : 2;
}

int cmd_infer(const CommonOpts& common, const std::string& ckpt, const std::string& video,
              const std::string& decode_cmd) {
  Resolved r = resolve_config(common);
  vqlm::Model model = vqlm::load_checkpoint(ckpt);
  if (r.has_model_keys) {
    const std::string diff = vqlm::model_config_diff(model.config(), r.cfg.model);
    if (!diff.empty()) {
      throw vqlm::ConfigError("checkpoint was trained with a different " + diff);
    }
  }
  std::cout << "config: " << vqlm::to_json(r.cfg).dump() << "\n";
  const auto clip = load_video(video, decode_cmd);
  const auto bundle = vqlm::media::make_bundle(clip, model.config().media);
  const auto score = model.score_bundle(bundle);
  const auto desc =
      model.describe(bundle, r.cfg.training.prompt, model.config().decoder.max_output);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(3);
  std::cout << "score: " << score.value << "\n";
  std::cout << "description: " << desc.text << "\n";
  if (desc.truncated) std::cout << "note: description truncated at the context limit\n";
  return 0;
}

int cmd_compare(const CommonOpts& common, const std::string& ckpt, const std::string& video_a,
                const std::string& video_b, const std::string& decode_cmd) {
  Resolved r = resolve_config(common);
  vqlm::Model model = vqlm::load_checkpoint(ckpt);
  std::cout << "config: " << vqlm::to_json(r.cfg).dump() << "\n";
  const auto clip_a = load_video(video_a, decode_cmd);
  const auto clip_b = load_video(video_b, decode_cmd);
  const auto bundle_a = vqlm::media::make_bundle(clip_a, model.config().media);
  const auto bundle_b = vqlm::media::make_bundle(clip_b, model.config().media);
  const auto score_a = model.score_bundle(bundle_a);
  const auto score_b = model.score_bundle(bundle_b);
  const auto desc = model.describe_pair(bundle_a, bundle_b, vqlm::decoder::kComparePrompt,
                                        model.config().decoder.max_output);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(3);
  std::cout << "score_a: " << score_a.value << "\n";
  std::cout << "score_b: " << score_b.value << "\n";
  // The verdict is derived from the same numbers printed above.
  if (score_a.value > score_b.value) {
    std::cout << "verdict: first video (" << video_a << ") has higher quality\n";
  } else if (score_b.value > score_a.value) {
    std::cout << "verdict: second video (" << video_b << ") has higher quality\n";
  } else {
    std::cout << "verdict: tie\n";
  }
  std::cout << "comparison: " << desc.text << "\n";
  if (desc.truncated) std::cout << "note: comparison truncated at the context limit\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-encoder video quality model: corpus generation, training, evaluation"};
  app.require_subcommand(1);

  CommonOpts gen_common;
  std::string gen_out;
  bool gen_force = false;
  auto* gen = app.add_subcommand("gen-data", "synthesize a distortion-ladder corpus");
  add_common(gen, gen_common);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_flag("--force", gen_force, "overwrite a non-empty output directory");
  gen->add_option("--sources", [&gen_common](const std::vector<std::string>& v) {
    gen_common.overrides.push_back("datagen.sources=" + v.back());
    return true;
  }, "number of procedural sources");
  gen->add_option("--levels", [&gen_common](const std::vector<std::string>& v) {
    gen_common.overrides.push_back("datagen.levels=" + v.back());
    return true;
  }, "severity steps per ladder");

  CommonOpts train_common;
  std::string train_data, train_out;
  auto* train = app.add_subcommand("train", "train on a generated corpus");
  add_common(train, train_common);
  train->add_option("--data", train_data, "manifest.jsonl path")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--mix", [&train_common](const std::vector<std::string>& v) {
    train_common.overrides.push_back("training.mix=" + v.back());
    return true;
  }, "fraction of pairwise slots per batch");
  train->add_option("--steps", [&train_common](const std::vector<std::string>& v) {
    train_common.overrides.push_back("training.steps=" + v.back());
    return true;
  }, "optimizer steps");
  train->add_option("--loss-weights", [&train_common](const std::vector<std::string>& v) {
    train_common.overrides.push_back("training.loss_weights=[" + v.back() + "]");
    return true;
  }, "w1,w2,w3");
  train->add_option("--freeze-mode", [&train_common](const std::vector<std::string>& v) {
    train_common.overrides.push_back("training.freeze_high=" + v.back());
    return true;
  }, "high-level encoder: frozen|head|all");
  train->add_option("--decoder-mode", [&train_common](const std::vector<std::string>& v) {
    train_common.overrides.push_back("training.decoder_mode=" + v.back());
    return true;
  }, "lora|full|frozen");

  CommonOpts eval_common;
  std::string eval_ckpt, eval_data, eval_out, eval_split = "test";
  std::optional<double> min_srcc, min_plcc;
  std::vector<std::string> max_fr;
  auto* evalc = app.add_subcommand("eval", "run the benchmark and write a report");
  add_common(evalc, eval_common);
  evalc->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  evalc->add_option("--data", eval_data, "manifest.jsonl path")->required();
  evalc->add_option("--out", eval_out, "output directory")->required();
  evalc->add_option("--split", eval_split, "train|test|all");
  evalc->add_option("--diffs", [&eval_common](const std::vector<std::string>& v) {
    eval_common.overrides.push_back("eval.diffs=[" + v.back() + "]");
    return true;
  }, "severity-difference buckets, e.g. 2,4,6");
  evalc->add_option("--min-srcc", min_srcc, "fail (exit 2) below this SRCC");
  evalc->add_option("--min-plcc", min_plcc, "fail (exit 2) below this PLCC");
  evalc->add_option("--max-fr", max_fr, "fail (exit 2) above this flip rate, DIFF:VALUE");

  CommonOpts infer_common;
  std::string infer_ckpt, infer_video, infer_decode;
  auto* infer = app.add_subcommand("infer", "score one video and describe it");
  add_common(infer, infer_common);
  infer->add_option("--ckpt", infer_ckpt, "checkpoint path")->required();
  infer->add_option("--video", infer_video, "clip directory (or file with --decode-cmd)")
      ->required();
  infer->add_option("--decode-cmd", infer_decode, "decoder command with {input} {outdir}");

  CommonOpts cmp_common;
  std::string cmp_ckpt, cmp_a, cmp_b, cmp_decode;
  auto* cmp = app.add_subcommand("compare", "pairwise quality comparison");
  add_common(cmp, cmp_common);
  cmp->add_option("--ckpt", cmp_ckpt, "checkpoint path")->required();
  cmp->add_option("--video-a", cmp_a, "first clip")->required();
  cmp->add_option("--video-b", cmp_b, "second clip")->required();
  cmp->add_option("--decode-cmd", cmp_decode, "decoder command with {input} {outdir}");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_common, gen_out, gen_force);
    if (train->parsed()) return cmd_train(train_common, train_data, train_out);
    if (evalc->parsed()) {
      return cmd_eval(eval_common, eval_ckpt, eval_data, eval_out, eval_split, min_srcc,
                      min_plcc, max_fr);
    }
    if (infer->parsed()) return cmd_infer(infer_common, infer_ckpt, infer_video, infer_decode);
    if (cmp->parsed()) return cmd_compare(cmp_common, cmp_ckpt, cmp_a, cmp_b, cmp_decode);
  } catch (const vqlm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
