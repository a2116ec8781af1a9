// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/model.h"

#include <cstring>
#include <fstream>

#include "vqlm/errors.h"
#include "vqlm/tokenizer.h"

namespace vqlm {

using nn::Matrix;
using nn::Tensor;

Model::Model(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  params_ = std::make_unique<nn::ParamStore>();
  const int high_tokens = (cfg.media.high_h / cfg.encoder_high.patch_embed) *
                          (cfg.media.high_w / cfg.encoder_high.patch_embed);
  const int low_tokens = (cfg.media.patch_size / cfg.encoder_low.patch_embed) *
                         (cfg.media.patch_size / cfg.encoder_low.patch_embed);
  enc_high_ = std::make_unique<encoders::VitEncoder>(
      *params_, "enc_high", cfg.encoder_high, cfg.decoder.embed_dim, high_tokens,
      nn::ParamGroup::kEncoderHighBackbone, nn::ParamGroup::kEncoderHighProj);
  enc_low_ = std::make_unique<encoders::VitEncoder>(
      *params_, "enc_low", cfg.encoder_low, cfg.decoder.embed_dim, low_tokens,
      nn::ParamGroup::kEncoderLowBackbone, nn::ParamGroup::kEncoderLowProj);
  decoder_ = std::make_unique<decoder::Decoder>(*params_, "decoder", cfg.decoder);
  head_ = std::make_unique<quality::QualityHead>(*params_, "head", cfg.decoder.embed_dim,
                                                 cfg.head);
  std::mt19937_64 rng(init_seed);
  enc_high_->init(*params_, rng);
  enc_low_->init(*params_, rng);
  decoder_->init(*params_, rng);
  head_->init(*params_, rng);
}

std::vector<encoders::EmbeddingSequence> Model::visual_blocks(nn::Tape& tape,
                                                              const media::FrameBundle& bundle,
                                                              bool as_padding) const {
  auto pairs = encoders::encode_video(tape, *enc_high_, *enc_low_, bundle, cfg_.media.patches_k);
  std::vector<encoders::EmbeddingSequence> blocks;
  blocks.reserve(pairs.size() * 2);
  for (auto& [u, v] : pairs) {
    u.is_padding = as_padding;
    v.is_padding = as_padding;
    blocks.push_back(std::move(u));
    blocks.push_back(std::move(v));
  }
  return blocks;
}

quality::QualityScore Model::score_bundle(const media::FrameBundle& bundle) const {
  nn::Tape tape(*params_);
  auto pairs = encoders::encode_video(tape, *enc_high_, *enc_low_, bundle, cfg_.media.patches_k);
  std::vector<double> per_frame;
  per_frame.reserve(pairs.size());
  for (const auto& [u, v] : pairs) {
    per_frame.push_back(head_->score_frame(tape, u, v).item());
  }
  return quality::QualityHead::to_quality_score(per_frame);
}

quality::QualityScore Model::score_clip(const media::VideoClip& clip) const {
  return score_bundle(media::make_bundle(clip, cfg_.media));
}

namespace {
std::vector<int> prompt_ids(const std::string& prompt) {
  std::vector<int> ids = {ByteTokenizer::kBos};
  const auto body = ByteTokenizer::encode(prompt);
  ids.insert(ids.end(), body.begin(), body.end());
  return ids;
}
}  // namespace

Model::Description Model::describe(const media::FrameBundle& bundle, const std::string& prompt,
                                   int max_len) const {
  // Single input: the bundle doubles as its own masked padding (case II).
  return describe_pair_impl(bundle, bundle, true, prompt, max_len);
}

Model::Description Model::describe_pair(const media::FrameBundle& a,
                                        const media::FrameBundle& b, const std::string& prompt,
                                        int max_len) const {
  return describe_pair_impl(a, b, false, prompt, max_len);
}

Model::Description Model::describe_pair_impl(const media::FrameBundle& a,
                                             const media::FrameBundle& b, bool b_is_padding,
                                             const std::string& prompt, int max_len) const {
  nn::Tape tape(*params_);
  std::vector<encoders::EmbeddingSequence> visuals = visual_blocks(tape, a, false);
  std::vector<encoders::EmbeddingSequence> second = visual_blocks(tape, b, b_is_padding);
  visuals.insert(visuals.end(), std::make_move_iterator(second.begin()),
                 std::make_move_iterator(second.end()));
  const decoder::PrefixSequence prefix =
      decoder_->build_prefix_sequence(tape, visuals, prompt_ids(prompt), {});
  const decoder::GenerationResult gen = decoder_->generate(*params_, prefix, max_len);
  Description d;
  d.text = ByteTokenizer::decode(gen.ids);
  d.truncated = gen.truncated;
  return d;
}

// ---- checkpoint container ----

namespace {

constexpr char kMagic[8] = {'V', 'Q', 'L', 'M', 'C', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kDtypeF64 = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for write: " + path);
  f.write(kMagic, sizeof(kMagic));
  write_pod(f, kVersion);
  const std::string cfg = to_json(model.config()).dump();
  write_pod(f, static_cast<uint64_t>(cfg.size()));
  f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const nn::ParamStore& store = model.params();
  write_pod(f, static_cast<uint32_t>(store.size()));
  for (int i = 0; i < store.size(); ++i) {
    const nn::Param& p = store.at(i);
    write_pod(f, static_cast<uint32_t>(p.name.size()));
    f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod(f, static_cast<uint64_t>(p.value.rows()));
    write_pod(f, static_cast<uint64_t>(p.value.cols()));
    write_pod(f, kDtypeF64);
    f.write(reinterpret_cast<const char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!f) throw IoError("short write on checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a vqlm checkpoint: " + path);
  }
  const auto version = read_pod<uint32_t>(f, path);
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  }
  const auto cfg_len = read_pod<uint64_t>(f, path);
  std::string cfg_text(cfg_len, '\0');
  f.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!f) throw IoError("truncated checkpoint config: " + path);
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(nlohmann::json::parse(cfg_text));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt config block in checkpoint " + path + ": " + e.what());
  }
  Model model(cfg, /*init_seed=*/0);
  nn::ParamStore& store = model.params();
  const auto n = read_pod<uint32_t>(f, path);
  if (static_cast<int>(n) != store.size()) {
    throw IoError("checkpoint parameter count mismatch (" + std::to_string(n) + " vs " +
                  std::to_string(store.size()) + "): " + path);
  }
  for (uint32_t i = 0; i < n; ++i) {
    const auto name_len = read_pod<uint32_t>(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const auto rows = read_pod<uint64_t>(f, path);
    const auto cols = read_pod<uint64_t>(f, path);
    const auto dtype = read_pod<uint8_t>(f, path);
    if (dtype != kDtypeF64) throw IoError("unsupported dtype in checkpoint: " + path);
    nn::Param& p = store.at(static_cast<int>(i));
    if (p.name != name) {
      throw IoError("checkpoint parameter order mismatch at '" + name + "' (expected '" +
                    p.name + "'): " + path);
    }
    if (static_cast<uint64_t>(p.value.rows()) != rows ||
        static_cast<uint64_t>(p.value.cols()) != cols) {
      throw IoError("checkpoint shape mismatch for '" + name + "': " + path);
    }
    f.read(reinterpret_cast<char*>(p.value.data()),
           static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!f) throw IoError("truncated checkpoint payload at '" + name + "': " + path);
  }
  return model;
}

}  // namespace vqlm
