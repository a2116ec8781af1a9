// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqlm/decoder.h"
#include "vqlm/encoders.h"
#include "vqlm/media.h"
#include "vqlm/quality_head.h"

namespace vqlm {

enum class DecoderTrainMode { kLora, kFull, kFrozen };
DecoderTrainMode decoder_train_mode_from_string(const std::string& s);
std::string to_string(DecoderTrainMode mode);

struct TrainingConfig {
  int batch_size = 128;        // paper-scale default
  double learning_rate = 1e-4;
  int steps = 200;
  double loss_w1 = 1.0;  // ranking
  double loss_w2 = 1.0;  // regression
  double loss_w3 = 1.0;  // text
  double single_pair_mix = 0.5;  // fraction of pairwise slots in a batch
  double margin = 0.0;           // optional hinge margin, 0 = plain hinge
  encoders::FreezeMode freeze_high = encoders::FreezeMode::kFrozen;
  encoders::FreezeMode freeze_low = encoders::FreezeMode::kAll;
  DecoderTrainMode decoder_mode = DecoderTrainMode::kLora;
  uint64_t seed = 42;
  int workers = 2;
  int log_every = 10;
  int eval_every = 0;  // 0 = only at the end
  std::string prompt = decoder::kDefaultPrompt;

  void validate() const;
};

struct DatagenConfig {
  int sources = 10;
  int levels = 20;  // S severity steps; a ladder has levels+1 entries
  std::vector<std::string> kinds = {"block_quant", "gauss_blur", "add_noise"};
  uint64_t seed = 7;
  int frame_h = 64;
  int frame_w = 96;
  int frames = 4;
  double train_fraction = 0.8;

  void validate() const;
};

struct EvalConfig {
  std::vector<int> diffs = {2, 4, 6, 8, 10, 20};
  bool plots = true;
  bool logistic_fit = false;   // optional monotone remap before PLCC
  bool ties_as_flips = true;

  void validate() const;
};

// Everything the checkpoint snapshots: the model is reconstructible from
// this alone.
struct ModelConfig {
  media::MediaConfig media;
  encoders::EncoderConfig encoder_high;
  encoders::EncoderConfig encoder_low;
  decoder::DecoderConfig decoder;
  quality::QualityHeadConfig head;

  void validate() const;
};

struct AppConfig {
  ModelConfig model;
  TrainingConfig training;
  DatagenConfig datagen;
  EvalConfig eval;

  void validate() const;
};

// Desk-scale preset: the default when no --config is given. Small enough to
// train on a laptop CPU in minutes.
AppConfig desk_config();
// Hyper-parameters matching the published full-scale setup; needs real data
// and serious compute, kept for reference and config completeness.
AppConfig paper_scale_config();

nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const AppConfig& cfg);
// Strict: unknown keys are rejected with their dotted path.
ModelConfig model_config_from_json(const nlohmann::json& j);
AppConfig app_config_from_json(const nlohmann::json& j);

AppConfig load_app_config(const std::string& path);

// "a.b.c=value" override; value parsed as JSON when possible, else string.
void apply_override(nlohmann::json& j, const std::string& key_value);

// Returns the dotted path of the first differing field, or "" when equal.
std::string model_config_diff(const ModelConfig& a, const ModelConfig& b);

}  // namespace vqlm
