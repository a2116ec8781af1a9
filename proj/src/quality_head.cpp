// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/quality_head.h"

#include <algorithm>
#include <cmath>

#include "vqlm/errors.h"

namespace vqlm::quality {

using nn::Tensor;

double clamp_score(double raw) { return std::clamp(raw, 1.0, 5.0); }

QualityHead::QualityHead(nn::ParamStore& store, const std::string& prefix, int embed_dim,
                         const QualityHeadConfig& cfg)
    : cfg_(cfg) {
  if (cfg_.hidden < 1) throw ConfigError("quality head: hidden width must be >= 1");
  w1_ = store.add(prefix + ".w1", embed_dim, cfg_.hidden, nn::ParamGroup::kQualityHead);
  b1_ = store.add(prefix + ".b1", 1, cfg_.hidden, nn::ParamGroup::kQualityHead);
  w2_ = store.add(prefix + ".w2", cfg_.hidden, 1, nn::ParamGroup::kQualityHead);
  b2_ = store.add(prefix + ".b2", 1, 1, nn::ParamGroup::kQualityHead);
}

void QualityHead::init(nn::ParamStore& store, std::mt19937_64& rng) const {
  nn::Matrix& w1 = store.at(w1_).value;
  nn::init_normal(w1, rng, 1.0 / std::sqrt(static_cast<double>(w1.rows())));
  nn::init_zero(store.at(b1_).value);
  nn::Matrix& w2 = store.at(w2_).value;
  nn::init_normal(w2, rng, 1.0 / std::sqrt(static_cast<double>(w2.rows())));
  // Start mid-scale; targets live in [1, 5].
  nn::init_const(store.at(b2_).value, 3.0);
}

Tensor QualityHead::score_frame(nn::Tape& tape, const encoders::EmbeddingSequence& u,
                                const encoders::EmbeddingSequence& v) const {
  if (u.segment != encoders::Segment::kHigh || v.segment != encoders::Segment::kLow) {
    throw InputError("score_frame: expects (high, low) embedding pair");
  }
  if (u.tokens.cols() != v.tokens.cols()) {
    throw InputError("score_frame: embedding dims differ (" + std::to_string(u.tokens.cols()) +
                     " vs " + std::to_string(v.tokens.cols()) + ")");
  }
  const Tensor stacked = nn::concat_rows({u.tokens, v.tokens});  // (T_h + T_l) x D
  const Tensor pooled = nn::mean_rows(stacked);                  // 1 x D
  const Tensor hidden = nn::relu(nn::linear(pooled, tape.param(w1_), tape.param(b1_)));
  return nn::linear(hidden, tape.param(w2_), tape.param(b2_));  // 1 x 1
}

Tensor QualityHead::score_video(
    nn::Tape& tape,
    const std::vector<std::pair<encoders::EmbeddingSequence, encoders::EmbeddingSequence>>& pairs)
    const {
  if (pairs.empty()) throw InputError("score_video: at least one key frame required");
  Tensor acc;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const Tensor s = score_frame(tape, pairs[i].first, pairs[i].second);
    acc = i == 0 ? s : nn::add(acc, s);
  }
  return nn::scale(acc, 1.0 / static_cast<double>(pairs.size()));
}

QualityScore QualityHead::to_quality_score(const std::vector<double>& per_frame) {
  if (per_frame.empty()) throw InputError("to_quality_score: no per-frame scores");
  QualityScore score;
  score.per_frame = per_frame;
  double raw = 0.0, clamped = 0.0;
  for (double s : per_frame) {
    raw += s;
    clamped += clamp_score(s);
  }
  score.raw = raw / static_cast<double>(per_frame.size());
  score.value = clamped / static_cast<double>(per_frame.size());
  return score;
}

}  // namespace vqlm::quality
