// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vqlm/config.h"
#include "vqlm/decoder.h"
#include "vqlm/encoders.h"
#include "vqlm/media.h"
#include "vqlm/nn/param_store.h"
#include "vqlm/quality_head.h"

namespace vqlm {

// Dual vision encoders + language decoder + quality head over one shared
// parameter store.
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t init_seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return *params_; }
  const nn::ParamStore& params() const { return *params_; }
  const encoders::VitEncoder& encoder_high() const { return *enc_high_; }
  const encoders::VitEncoder& encoder_low() const { return *enc_low_; }
  const decoder::Decoder& lm() const { return *decoder_; }
  const quality::QualityHead& head() const { return *head_; }

  // Per-frame [u_i, v_i] blocks in key-frame order for one video.
  std::vector<encoders::EmbeddingSequence> visual_blocks(nn::Tape& tape,
                                                         const media::FrameBundle& bundle,
                                                         bool as_padding = false) const;

  // Encoder + head only; no decoder involved. Cheap scoring path.
  quality::QualityScore score_bundle(const media::FrameBundle& bundle) const;
  quality::QualityScore score_clip(const media::VideoClip& clip) const;

  // Duplicate-and-mask single-video generation (the pad video is the same
  // bundle with masked attention), or genuine pairwise generation.
  struct Description {
    std::string text;
    bool truncated = false;
  };
  Description describe(const media::FrameBundle& bundle, const std::string& prompt,
                       int max_len) const;
  Description describe_pair(const media::FrameBundle& a, const media::FrameBundle& b,
                            const std::string& prompt, int max_len) const;

 private:
  Description describe_pair_impl(const media::FrameBundle& a, const media::FrameBundle& b,
                                 bool b_is_padding, const std::string& prompt,
                                 int max_len) const;

  ModelConfig cfg_;
  std::unique_ptr<nn::ParamStore> params_;
  std::unique_ptr<encoders::VitEncoder> enc_high_;
  std::unique_ptr<encoders::VitEncoder> enc_low_;
  std::unique_ptr<decoder::Decoder> decoder_;
  std::unique_ptr<quality::QualityHead> head_;
};

// Single-file checkpoint: versioned header, model-config snapshot, named
// parameter blobs (name, shape, dtype, raw little-endian payload).
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace vqlm
