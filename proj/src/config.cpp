// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/config.h"

#include <fstream>
#include <set>

#include "vqlm/errors.h"

namespace vqlm {

using nlohmann::json;

DecoderTrainMode decoder_train_mode_from_string(const std::string& s) {
  if (s == "lora") return DecoderTrainMode::kLora;
  if (s == "full") return DecoderTrainMode::kFull;
  if (s == "frozen") return DecoderTrainMode::kFrozen;
  throw ConfigError("unknown decoder mode '" + s + "' (expected lora|full|frozen)");
}

std::string to_string(DecoderTrainMode mode) {
  switch (mode) {
    case DecoderTrainMode::kLora:
      return "lora";
    case DecoderTrainMode::kFull:
      return "full";
    case DecoderTrainMode::kFrozen:
      return "frozen";
  }
  return "?";
}

void TrainingConfig::validate() const {
  if (batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (steps < 0) throw ConfigError("training.steps must be >= 0");
  if (loss_w1 < 0 || loss_w2 < 0 || loss_w3 < 0) {
    throw ConfigError("training.loss_weights must be non-negative");
  }
  if (single_pair_mix < 0.0 || single_pair_mix > 1.0) {
    throw ConfigError("training.mix must lie in [0, 1]");
  }
  if (workers < 1) throw ConfigError("training.workers must be >= 1");
}

void DatagenConfig::validate() const {
  if (sources < 1) throw ConfigError("datagen.sources must be >= 1");
  if (levels < 1) throw ConfigError("datagen.levels must be >= 1");
  if (kinds.empty()) throw ConfigError("datagen.kinds must not be empty");
  if (frame_h < 8 || frame_w < 8) throw ConfigError("datagen frame dims too small");
  if (frames < 1) throw ConfigError("datagen.frames must be >= 1");
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw ConfigError("datagen.train_fraction must lie in (0, 1)");
  }
}

void EvalConfig::validate() const {
  if (diffs.empty()) throw ConfigError("eval.diffs must not be empty");
  for (int d : diffs) {
    if (d < 1) throw ConfigError("eval.diffs entries must be >= 1");
  }
}

void ModelConfig::validate() const {
  encoder_high.validate();
  encoder_low.validate();
  decoder.validate();
  if (media.key_frames_m < 1) throw ConfigError("media.key_frames_m must be >= 1");
  if (media.high_h % encoder_high.patch_embed != 0 ||
      media.high_w % encoder_high.patch_embed != 0) {
    throw ConfigError("media.high view does not match encoder_high.patch_embed grid");
  }
  if (media.patch_size % encoder_low.patch_embed != 0) {
    throw ConfigError("media.patch_size does not match encoder_low.patch_embed grid");
  }
}

void AppConfig::validate() const {
  model.validate();
  training.validate();
  datagen.validate();
  eval.validate();
}

AppConfig desk_config() {
  AppConfig cfg;
  cfg.model.media.key_frames_m = 2;
  cfg.model.media.high_h = 32;
  cfg.model.media.high_w = 32;
  cfg.model.media.patch_box_h = 48;
  cfg.model.media.patch_box_w = 96;
  cfg.model.media.patch_size = 16;
  cfg.model.media.patches_k = 4;
  cfg.model.encoder_high = {2, 4, 64, 128, 8, encoders::FreezeMode::kFrozen};
  cfg.model.encoder_low = {2, 4, 64, 128, 8, encoders::FreezeMode::kAll};
  cfg.model.decoder.layers = 2;
  cfg.model.decoder.embed_dim = 64;
  cfg.model.decoder.heads = 4;
  cfg.model.decoder.mlp_dim = 128;
  cfg.model.decoder.max_context = 768;
  cfg.model.decoder.max_prompt = 512;
  cfg.model.decoder.max_output = 160;
  cfg.model.decoder.lora_rank = 4;
  cfg.model.head.hidden = 64;
  cfg.training.batch_size = 8;
  cfg.training.learning_rate = 2e-3;
  cfg.training.steps = 300;
  cfg.training.single_pair_mix = 0.5;
  cfg.training.decoder_mode = DecoderTrainMode::kFull;
  cfg.training.workers = 2;
  return cfg;
}

AppConfig paper_scale_config() {
  AppConfig cfg;
  cfg.model.media.key_frames_m = 5;
  cfg.model.media.high_h = 448;
  cfg.model.media.high_w = 448;
  cfg.model.media.patch_box_h = 540;
  cfg.model.media.patch_box_w = 1080;
  cfg.model.media.patch_size = 224;
  cfg.model.media.patches_k = 8;
  cfg.model.encoder_high = {12, 8, 512, 2048, 32, encoders::FreezeMode::kFrozen};
  cfg.model.encoder_low = {12, 8, 512, 2048, 32, encoders::FreezeMode::kAll};
  cfg.model.decoder.layers = 12;
  cfg.model.decoder.embed_dim = 512;
  cfg.model.decoder.heads = 8;
  cfg.model.decoder.mlp_dim = 2048;
  cfg.model.decoder.max_context = 4096;
  cfg.model.decoder.max_prompt = 512;
  cfg.model.decoder.max_output = 512;
  cfg.model.decoder.lora_rank = 4;
  cfg.model.head.hidden = 512;
  cfg.training.batch_size = 128;
  cfg.training.learning_rate = 1e-4;
  cfg.training.steps = 500;  // epochs at full scale
  cfg.training.decoder_mode = DecoderTrainMode::kLora;
  return cfg;
}

namespace {

// Tracks consumed keys so unknown ones can be rejected with a dotted path.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("bad value for " + dotted(key));
    }
  }

  void get_enum(const char* key, encoders::FreezeMode& out) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = encoders::freeze_mode_from_string(s);
  }

  void get_enum(const char* key, DecoderTrainMode& out) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = decoder_train_mode_from_string(s);
  }

  bool has_child(const char* key) {
    if (j_.contains(key)) {
      seen_.insert(key);
      return true;
    }
    return false;
  }
  const json& child(const char* key) { return j_.at(key); }

  std::string dotted(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown key: " + dotted(it.key().c_str()));
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json encoder_to_json(const encoders::EncoderConfig& e) {
  return json{{"layers", e.layers},         {"heads", e.heads},
              {"model_dim", e.model_dim},   {"mlp_dim", e.mlp_dim},
              {"patch_embed", e.patch_embed}, {"freeze", encoders::to_string(e.freeze)}};
}

encoders::EncoderConfig encoder_from_json(const json& j, const std::string& path,
                                          encoders::EncoderConfig base) {
  StrictObject o(j, path);
  o.get("layers", base.layers);
  o.get("heads", base.heads);
  o.get("model_dim", base.model_dim);
  o.get("mlp_dim", base.mlp_dim);
  o.get("patch_embed", base.patch_embed);
  o.get_enum("freeze", base.freeze);
  o.finish();
  return base;
}

}  // namespace

json to_json(const ModelConfig& cfg) {
  json j;
  j["media"] = {{"key_frames_m", cfg.media.key_frames_m}, {"high_h", cfg.media.high_h},
                {"high_w", cfg.media.high_w},             {"patch_box_h", cfg.media.patch_box_h},
                {"patch_box_w", cfg.media.patch_box_w},   {"patch_size", cfg.media.patch_size},
                {"patches_k", cfg.media.patches_k}};
  j["encoder_high"] = encoder_to_json(cfg.encoder_high);
  j["encoder_low"] = encoder_to_json(cfg.encoder_low);
  j["decoder"] = {{"layers", cfg.decoder.layers},
                  {"embed_dim", cfg.decoder.embed_dim},
                  {"heads", cfg.decoder.heads},
                  {"mlp_dim", cfg.decoder.mlp_dim},
                  {"max_context", cfg.decoder.max_context},
                  {"max_prompt", cfg.decoder.max_prompt},
                  {"max_output", cfg.decoder.max_output},
                  {"lora_rank", cfg.decoder.lora_rank}};
  j["head"] = {{"hidden", cfg.head.hidden}};
  return j;
}

json to_json(const AppConfig& cfg) {
  json j = to_json(cfg.model);
  j["training"] = {{"batch_size", cfg.training.batch_size},
                   {"learning_rate", cfg.training.learning_rate},
                   {"steps", cfg.training.steps},
                   {"loss_weights", {cfg.training.loss_w1, cfg.training.loss_w2,
                                     cfg.training.loss_w3}},
                   {"mix", cfg.training.single_pair_mix},
                   {"margin", cfg.training.margin},
                   {"freeze_high", encoders::to_string(cfg.training.freeze_high)},
                   {"freeze_low", encoders::to_string(cfg.training.freeze_low)},
                   {"decoder_mode", to_string(cfg.training.decoder_mode)},
                   {"seed", cfg.training.seed},
                   {"workers", cfg.training.workers},
                   {"log_every", cfg.training.log_every},
                   {"eval_every", cfg.training.eval_every},
                   {"prompt", cfg.training.prompt}};
  j["datagen"] = {{"sources", cfg.datagen.sources},
                  {"levels", cfg.datagen.levels},
                  {"kinds", cfg.datagen.kinds},
                  {"seed", cfg.datagen.seed},
                  {"frame_h", cfg.datagen.frame_h},
                  {"frame_w", cfg.datagen.frame_w},
                  {"frames", cfg.datagen.frames},
                  {"train_fraction", cfg.datagen.train_fraction}};
  j["eval"] = {{"diffs", cfg.eval.diffs},
               {"plots", cfg.eval.plots},
               {"logistic_fit", cfg.eval.logistic_fit},
               {"ties_as_flips", cfg.eval.ties_as_flips}};
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg = desk_config().model;
  StrictObject root(j, "");
  if (root.has_child("media")) {
    StrictObject o(root.child("media"), "media");
    o.get("key_frames_m", cfg.media.key_frames_m);
    o.get("high_h", cfg.media.high_h);
    o.get("high_w", cfg.media.high_w);
    o.get("patch_box_h", cfg.media.patch_box_h);
    o.get("patch_box_w", cfg.media.patch_box_w);
    o.get("patch_size", cfg.media.patch_size);
    o.get("patches_k", cfg.media.patches_k);
    o.finish();
  }
  if (root.has_child("encoder_high")) {
    cfg.encoder_high = encoder_from_json(root.child("encoder_high"), "encoder_high",
                                         cfg.encoder_high);
  }
  if (root.has_child("encoder_low")) {
    cfg.encoder_low = encoder_from_json(root.child("encoder_low"), "encoder_low",
                                        cfg.encoder_low);
  }
  if (root.has_child("decoder")) {
    StrictObject o(root.child("decoder"), "decoder");
    o.get("layers", cfg.decoder.layers);
    o.get("embed_dim", cfg.decoder.embed_dim);
    o.get("heads", cfg.decoder.heads);
    o.get("mlp_dim", cfg.decoder.mlp_dim);
    o.get("max_context", cfg.decoder.max_context);
    o.get("max_prompt", cfg.decoder.max_prompt);
    o.get("max_output", cfg.decoder.max_output);
    o.get("lora_rank", cfg.decoder.lora_rank);
    o.finish();
  }
  if (root.has_child("head")) {
    StrictObject o(root.child("head"), "head");
    o.get("hidden", cfg.head.hidden);
    o.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

namespace {
// ModelConfig parsing consumes only its sections; AppConfig shares the root.
const std::set<std::string> kModelSections = {"media", "encoder_high", "encoder_low", "decoder",
                                              "head"};
}  // namespace

AppConfig app_config_from_json(const json& j) {
  AppConfig cfg = desk_config();
  json model_part = json::object();
  json rest = json::object();
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (kModelSections.count(it.key())) {
      model_part[it.key()] = it.value();
    } else {
      rest[it.key()] = it.value();
    }
  }
  cfg.model = model_config_from_json(model_part);
  StrictObject root(rest, "");
  if (root.has_child("training")) {
    StrictObject o(root.child("training"), "training");
    o.get("batch_size", cfg.training.batch_size);
    o.get("learning_rate", cfg.training.learning_rate);
    o.get("steps", cfg.training.steps);
    std::vector<double> w;
    o.get("loss_weights", w);
    if (!w.empty()) {
      if (w.size() != 3) throw ConfigError("training.loss_weights needs exactly 3 entries");
      cfg.training.loss_w1 = w[0];
      cfg.training.loss_w2 = w[1];
      cfg.training.loss_w3 = w[2];
    }
    o.get("mix", cfg.training.single_pair_mix);
    o.get("margin", cfg.training.margin);
    o.get_enum("freeze_high", cfg.training.freeze_high);
    o.get_enum("freeze_low", cfg.training.freeze_low);
    o.get_enum("decoder_mode", cfg.training.decoder_mode);
    o.get("seed", cfg.training.seed);
    o.get("workers", cfg.training.workers);
    o.get("log_every", cfg.training.log_every);
    o.get("eval_every", cfg.training.eval_every);
    o.get("prompt", cfg.training.prompt);
    o.finish();
  }
  if (root.has_child("datagen")) {
    StrictObject o(root.child("datagen"), "datagen");
    o.get("sources", cfg.datagen.sources);
    o.get("levels", cfg.datagen.levels);
    o.get("kinds", cfg.datagen.kinds);
    o.get("seed", cfg.datagen.seed);
    o.get("frame_h", cfg.datagen.frame_h);
    o.get("frame_w", cfg.datagen.frame_w);
    o.get("frames", cfg.datagen.frames);
    o.get("train_fraction", cfg.datagen.train_fraction);
    o.finish();
  }
  if (root.has_child("eval")) {
    StrictObject o(root.child("eval"), "eval");
    o.get("diffs", cfg.eval.diffs);
    o.get("plots", cfg.eval.plots);
    o.get("logistic_fit", cfg.eval.logistic_fit);
    o.get("ties_as_flips", cfg.eval.ties_as_flips);
    o.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

AppConfig load_app_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path + ": " + e.what());
  }
  return app_config_from_json(j);
}

void apply_override(json& j, const std::string& key_value) {
  const size_t eq = key_value.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value, got '" + key_value + "'");
  }
  const std::string path = key_value.substr(0, eq);
  const std::string raw = key_value.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // plain string
  }
  json* at = &j;
  size_t start = 0;
  for (;;) {
    const size_t dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError("bad override path: " + path);
    if (dot == std::string::npos) {
      (*at)[part] = value;
      break;
    }
    at = &(*at)[part];
    start = dot + 1;
  }
}

std::string model_config_diff(const ModelConfig& a, const ModelConfig& b) {
  const json ja = to_json(a);
  const json jb = to_json(b);
  for (auto it = ja.begin(); it != ja.end(); ++it) {
    for (auto f = it.value().begin(); f != it.value().end(); ++f) {
      if (jb.at(it.key()).at(f.key()) != f.value()) {
        return it.key() + "." + f.key();
      }
    }
  }
  return "";
}

}  // namespace vqlm
