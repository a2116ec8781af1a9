// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/encoders.h"

#include <cmath>

#include "vqlm/errors.h"

namespace vqlm::encoders {

using nn::Matrix;
using nn::Tensor;

FreezeMode freeze_mode_from_string(const std::string& s) {
  if (s == "frozen") return FreezeMode::kFrozen;
  if (s == "head") return FreezeMode::kHead;
  if (s == "all") return FreezeMode::kAll;
  throw ConfigError("unknown freeze mode '" + s + "' (expected frozen|head|all)");
}

std::string to_string(FreezeMode mode) {
  switch (mode) {
    case FreezeMode::kFrozen:
      return "frozen";
    case FreezeMode::kHead:
      return "head";
    case FreezeMode::kAll:
      return "all";
  }
  return "?";
}

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder: layers must be >= 1");
  if (heads < 1 || model_dim % heads != 0) {
    throw ConfigError("encoder: model_dim must be divisible by heads");
  }
  if (patch_embed < 1) throw ConfigError("encoder: patch_embed must be >= 1");
}

VitEncoder::VitEncoder(nn::ParamStore& store, const std::string& prefix,
                       const EncoderConfig& cfg, int out_dim, int max_tokens,
                       nn::ParamGroup backbone_group, nn::ParamGroup proj_group)
    : cfg_(cfg), out_dim_(out_dim), max_tokens_(max_tokens) {
  cfg_.validate();
  const int in_dim = cfg_.patch_embed * cfg_.patch_embed * 3;
  patch_w_ = store.add(prefix + ".patch_embed.w", in_dim, cfg_.model_dim, backbone_group);
  patch_b_ = store.add(prefix + ".patch_embed.b", 1, cfg_.model_dim, backbone_group);
  pos_ = store.add(prefix + ".pos", max_tokens, cfg_.model_dim, backbone_group);
  blocks_.reserve(static_cast<size_t>(cfg_.layers));
  for (int l = 0; l < cfg_.layers; ++l) {
    blocks_.push_back(nn::register_block(store, prefix + ".block" + std::to_string(l),
                                         cfg_.model_dim, cfg_.mlp_dim, backbone_group));
  }
  final_ln_g_ = store.add(prefix + ".final_ln.gamma", 1, cfg_.model_dim, backbone_group);
  final_ln_b_ = store.add(prefix + ".final_ln.beta", 1, cfg_.model_dim, backbone_group);
  proj_w_ = store.add(prefix + ".proj.w", cfg_.model_dim, out_dim, proj_group);
  proj_b_ = store.add(prefix + ".proj.b", 1, out_dim, proj_group);
  post_ln_g_ = store.add(prefix + ".post_ln.gamma", 1, out_dim, proj_group);
  post_ln_b_ = store.add(prefix + ".post_ln.beta", 1, out_dim, proj_group);
}

void VitEncoder::init(nn::ParamStore& store, std::mt19937_64& rng) const {
  auto winit = [&](int id) {
    Matrix& m = store.at(id).value;
    nn::init_normal(m, rng, 1.0 / std::sqrt(static_cast<double>(m.rows())));
  };
  winit(patch_w_);
  nn::init_zero(store.at(patch_b_).value);
  nn::init_normal(store.at(pos_).value, rng, 0.02);
  for (const auto& b : blocks_) nn::init_block(store, b, rng);
  nn::init_const(store.at(final_ln_g_).value, 1.0);
  nn::init_zero(store.at(final_ln_b_).value);
  winit(proj_w_);
  nn::init_zero(store.at(proj_b_).value);
  nn::init_const(store.at(post_ln_g_).value, 1.0);
  nn::init_zero(store.at(post_ln_b_).value);
}

int VitEncoder::tokens_for(int h, int w) const {
  if (h % cfg_.patch_embed != 0 || w % cfg_.patch_embed != 0) {
    throw ConfigError("encoder: " + std::to_string(h) + "x" + std::to_string(w) +
                      " frame does not match the patch-embed grid of " +
                      std::to_string(cfg_.patch_embed));
  }
  return (h / cfg_.patch_embed) * (w / cfg_.patch_embed);
}

nn::Tensor VitEncoder::encode_tokens(nn::Tape& tape, const ImageF& img) const {
  const int n_tokens = tokens_for(img.h, img.w);
  if (n_tokens > max_tokens_) {
    throw ConfigError("encoder: input yields " + std::to_string(n_tokens) +
                      " tokens, position table holds " + std::to_string(max_tokens_));
  }
  const int pe = cfg_.patch_embed;
  const int grid_h = img.h / pe;
  const int grid_w = img.w / pe;
  Matrix flat(n_tokens, pe * pe * 3);
  for (int gy = 0; gy < grid_h; ++gy) {
    for (int gx = 0; gx < grid_w; ++gx) {
      const int t = gy * grid_w + gx;
      int col = 0;
      for (int y = 0; y < pe; ++y) {
        for (int x = 0; x < pe; ++x) {
          for (int c = 0; c < 3; ++c) {
            flat(t, col++) = img.at(gy * pe + y, gx * pe + x, c);
          }
        }
      }
    }
  }
  Tensor x = nn::linear(Tensor::constant(std::move(flat)), tape.param(patch_w_),
                        tape.param(patch_b_));
  x = nn::add(x, nn::slice_rows(tape.param(pos_), 0, n_tokens));
  for (const auto& b : blocks_) {
    x = nn::run_block(tape, x, b, cfg_.heads);
  }
  return nn::layer_norm_rows(x, tape.param(final_ln_g_), tape.param(final_ln_b_));
}

nn::Tensor VitEncoder::project(nn::Tape& tape, const nn::Tensor& tokens) const {
  return nn::linear(tokens, tape.param(proj_w_), tape.param(proj_b_));
}

namespace {
void check_finite(const Tensor& t, const char* what) {
  if (!t.value().allFinite()) {
    throw NumericError(std::string(what) + " produced non-finite embeddings");
  }
}
}  // namespace

EmbeddingSequence encode_high(nn::Tape& tape, const VitEncoder& enc, const ImageF& frame,
                              int frame_index) {
  if (frame.empty()) throw InputError("encode_high: empty frame");
  EmbeddingSequence seq;
  seq.tokens = enc.project(tape, enc.encode_tokens(tape, frame));
  seq.segment = Segment::kHigh;
  seq.frame_index = frame_index;
  check_finite(seq.tokens, "encode_high");
  return seq;
}

EmbeddingSequence encode_low(nn::Tape& tape, const VitEncoder& enc,
                             const std::vector<ImageF>& patches, int expected_k,
                             int frame_index) {
  if (static_cast<int>(patches.size()) != expected_k) {
    throw InputError("encode_low: expected " + std::to_string(expected_k) + " patches, got " +
                     std::to_string(patches.size()));
  }
  for (const auto& p : patches) {
    if (p.h != patches[0].h || p.w != patches[0].w) {
      throw InputError("encode_low: patches differ in size");
    }
  }
  // Project to D first, then average over the patch axis, then layer norm.
  Tensor pooled;
  for (size_t j = 0; j < patches.size(); ++j) {
    const Tensor proj = enc.project(tape, enc.encode_tokens(tape, patches[j]));
    pooled = j == 0 ? proj : nn::add(pooled, proj);
  }
  pooled = nn::scale(pooled, 1.0 / static_cast<double>(patches.size()));
  EmbeddingSequence seq;
  seq.tokens = nn::layer_norm_rows(pooled, tape.param(enc.post_ln_gamma()),
                                   tape.param(enc.post_ln_beta()));
  seq.segment = Segment::kLow;
  seq.frame_index = frame_index;
  check_finite(seq.tokens, "encode_low");
  return seq;
}

std::vector<std::pair<EmbeddingSequence, EmbeddingSequence>> encode_video(
    nn::Tape& tape, const VitEncoder& high, const VitEncoder& low,
    const media::FrameBundle& bundle, int patches_k) {
  if (bundle.key_frames.empty()) throw InputError("encode_video: empty bundle");
  if (bundle.high_view.size() != bundle.key_frames.size() ||
      bundle.patch_view.size() != bundle.key_frames.size()) {
    throw InputError("encode_video: bundle views out of sync with key frames");
  }
  std::vector<std::pair<EmbeddingSequence, EmbeddingSequence>> out;
  out.reserve(bundle.key_frames.size());
  for (size_t i = 0; i < bundle.key_frames.size(); ++i) {
    const int fi = static_cast<int>(i);
    out.emplace_back(encode_high(tape, high, bundle.high_view[i], fi),
                     encode_low(tape, low, bundle.patch_view[i], patches_k, fi));
  }
  return out;
}

}  // namespace vqlm::encoders
