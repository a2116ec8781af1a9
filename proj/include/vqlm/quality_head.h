// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <random>
#include <string>
#include <vector>

#include "vqlm/encoders.h"
#include "vqlm/nn/param_store.h"

namespace vqlm::quality {

struct QualityHeadConfig {
  int hidden = 64;  // width of the middle MLP layer
};

// Calibrated scalar score plus the raw per-frame values behind it.
struct QualityScore {
  double value = 0.0;  // mean of per-frame scores clamped to [1, 5]
  double raw = 0.0;    // mean of unclamped per-frame scores (training/eval)
  std::vector<double> per_frame;
};

// Two-layer MLP with ReLU between the fully connected layers. Input is the
// token-axis mean of [u_i; v_i]; output a scalar per frame. Video score is
// the mean over key frames.
class QualityHead {
 public:
  QualityHead(nn::ParamStore& store, const std::string& prefix, int embed_dim,
              const QualityHeadConfig& cfg);

  void init(nn::ParamStore& store, std::mt19937_64& rng) const;

  nn::Tensor score_frame(nn::Tape& tape, const encoders::EmbeddingSequence& u,
                         const encoders::EmbeddingSequence& v) const;

  // Raw mean over frames as a graph scalar (1x1).
  nn::Tensor score_video(
      nn::Tape& tape,
      const std::vector<std::pair<encoders::EmbeddingSequence, encoders::EmbeddingSequence>>&
          pairs) const;

  static QualityScore to_quality_score(const std::vector<double>& per_frame);

 private:
  QualityHeadConfig cfg_;
  int w1_, b1_, w2_, b2_;
};

double clamp_score(double raw);

}  // namespace vqlm::quality
