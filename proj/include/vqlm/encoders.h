// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <random>
#include <string>
#include <vector>

#include "vqlm/image.h"
#include "vqlm/media.h"
#include "vqlm/nn/layers.h"
#include "vqlm/nn/param_store.h"

namespace vqlm::encoders {

enum class Segment { kHigh, kLow, kText };

// Projected token embeddings for one frame (or a text span).
struct EmbeddingSequence {
  nn::Tensor tokens;  // T x D
  Segment segment = Segment::kHigh;
  int frame_index = 0;
  bool is_padding = false;  // duplicated-input blocks the decoder must ignore
};

enum class FreezeMode { kFrozen, kHead, kAll };

FreezeMode freeze_mode_from_string(const std::string& s);
std::string to_string(FreezeMode mode);

struct EncoderConfig {
  int layers = 2;
  int heads = 4;
  int model_dim = 64;
  int mlp_dim = 128;
  int patch_embed = 8;  // side of the square patch-embedding grid cell
  FreezeMode freeze = FreezeMode::kAll;

  void validate() const;
};

// Small ViT with learned positional embeddings plus a linear projection to
// the decoder dimension D. Stands in for a pretrained backbone behind the
// same interface and tensor shapes.
class VitEncoder {
 public:
  VitEncoder(nn::ParamStore& store, const std::string& prefix, const EncoderConfig& cfg,
             int out_dim, int max_tokens, nn::ParamGroup backbone_group,
             nn::ParamGroup proj_group);

  void init(nn::ParamStore& store, std::mt19937_64& rng) const;

  // Full backbone: patch embedding, positional embedding, blocks, final LN.
  // Result is tokens x model_dim.
  nn::Tensor encode_tokens(nn::Tape& tape, const ImageF& img) const;

  // Linear projection model_dim -> out_dim.
  nn::Tensor project(nn::Tape& tape, const nn::Tensor& tokens) const;

  const EncoderConfig& config() const { return cfg_; }
  int out_dim() const { return out_dim_; }
  int tokens_for(int h, int w) const;

  // Post-pool layer norm parameters (used by the low-level path).
  int post_ln_gamma() const { return post_ln_g_; }
  int post_ln_beta() const { return post_ln_b_; }

 private:
  EncoderConfig cfg_;
  int out_dim_;
  int max_tokens_;
  int patch_w_, patch_b_;  // patch embedding
  int pos_;
  std::vector<nn::TransformerBlockIds> blocks_;
  int final_ln_g_, final_ln_b_;
  int proj_w_, proj_b_;
  int post_ln_g_, post_ln_b_;
};

// High-level pathway: ViT over the aspect-destroying resized frame, then
// projection to D.
EmbeddingSequence encode_high(nn::Tape& tape, const VitEncoder& enc, const ImageF& frame,
                              int frame_index = 0);

// Low-level pathway: each of the K patches through the ViT, projection to D,
// mean over the patch axis, layer normalization.
EmbeddingSequence encode_low(nn::Tape& tape, const VitEncoder& enc,
                             const std::vector<ImageF>& patches, int expected_k,
                             int frame_index = 0);

// Both pathways applied per key frame.
std::vector<std::pair<EmbeddingSequence, EmbeddingSequence>> encode_video(
    nn::Tape& tape, const VitEncoder& high, const VitEncoder& low,
    const media::FrameBundle& bundle, int patches_k);

}  // namespace vqlm::encoders
