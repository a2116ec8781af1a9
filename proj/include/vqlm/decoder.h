// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <random>
#include <string>
#include <vector>

#include "vqlm/encoders.h"
#include "vqlm/nn/layers.h"
#include "vqlm/nn/param_store.h"
#include "vqlm/tokenizer.h"

namespace vqlm::decoder {

// Prompt used for annotation, fine-tuning, and single-video inference.
extern const char* const kDefaultPrompt;
// Pairwise comparisons have no documented prompt; this one is ours.
extern const char* const kComparePrompt;

struct DecoderConfig {
  int layers = 2;
  int embed_dim = 64;  // D
  int heads = 4;
  int mlp_dim = 128;
  int max_context = 768;
  int max_prompt = 512;  // L
  int max_output = 160;  // O
  int lora_rank = 4;     // R, adapters on q/k/v

  void validate() const;
};

// Boolean attention mask with a bidirectional prefix and causal suffix.
// Padding positions are masked out in all rows and columns.
struct AttentionMask {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> allowed;
  int prefix_len = 0;
};

AttentionMask build_attention_mask(int total_len, int prefix_len,
                                   const std::vector<std::pair<int, int>>& pad_spans);

// W + scale * (A * B), leaving the base untouched.
nn::Tensor apply_lora(const nn::Tensor& base, const nn::Tensor& a, const nn::Tensor& b,
                      double scale);
nn::Matrix apply_lora_plain(const nn::Matrix& base, const nn::Matrix& a, const nn::Matrix& b,
                            double scale);

// Assembled decoder input: interleaved visual blocks, prompt, then target.
struct PrefixSequence {
  nn::Tensor embeddings;  // S x D
  AttentionMask mask;
  nn::AttentionMaskBias mask_bias;
  int prefix_len = 0;
  int total_len = 0;
  int target_len = 0;  // rows [prefix_len, prefix_len + target_len)
};

struct GenerationResult {
  std::vector<int> ids;
  bool truncated = false;
};

enum class DecodeStrategy { kGreedy, kSample };

class Decoder {
 public:
  Decoder(nn::ParamStore& store, const std::string& prefix, const DecoderConfig& cfg);

  void init(nn::ParamStore& store, std::mt19937_64& rng) const;

  const DecoderConfig& config() const { return cfg_; }

  // Embedding-table lookup for a token sequence (L x D; 0 x D when empty).
  encoders::EmbeddingSequence embed_text(nn::Tape& tape, const std::vector<int>& ids) const;

  // [visual blocks..., prompt, target]; prefix_len = visual tokens + prompt
  // length. Pad-flagged visual blocks get all-false mask rows and columns.
  PrefixSequence build_prefix_sequence(nn::Tape& tape,
                                       const std::vector<encoders::EmbeddingSequence>& visuals,
                                       const std::vector<int>& prompt_ids,
                                       const std::vector<int>& target_ids) const;

  // Full-sequence transformer pass (positions added inside). S x D.
  nn::Tensor forward_hidden(nn::Tape& tape, const nn::Tensor& embeddings,
                            const nn::AttentionMaskBias& mask) const;

  // Logits over V for `n` consecutive hidden rows starting at `start`.
  nn::Tensor logits_rows(nn::Tape& tape, const nn::Tensor& hidden, int start, int n) const;

  // Greedy (default) or sampled generation from a built prefix.
  GenerationResult generate(const nn::ParamStore& store, const PrefixSequence& prefix,
                            int max_len, DecodeStrategy strategy = DecodeStrategy::kGreedy,
                            uint64_t sample_seed = 0) const;

  // Parameter ids, exposed for targeted tests.
  int token_embedding_id() const { return tok_emb_; }
  int lora_a_id(int layer, int which) const;  // which: 0=q, 1=k, 2=v
  int lora_b_id(int layer, int which) const;
  const std::vector<nn::TransformerBlockIds>& blocks() const { return blocks_; }

 private:
  friend class DecoderSession;
  nn::EffectiveQkv effective_qkv(nn::Tape& tape, int layer) const;

  DecoderConfig cfg_;
  int tok_emb_;  // V x D
  int pos_;      // max_context x D
  std::vector<nn::TransformerBlockIds> blocks_;
  struct LoraIds {
    int aq, bq, ak, bk, av, bv;
  };
  std::vector<LoraIds> lora_;
  int final_ln_g_, final_ln_b_;
  int out_w_, out_b_;
};

// Incremental decoding state: per-layer key/value caches over plain
// matrices. One session per request; sessions are independent.
class DecoderSession {
 public:
  DecoderSession(const Decoder& dec, const nn::ParamStore& store);

  // Runs the whole prefix (bidirectional within the prefix, pads masked) and
  // returns logits at the last prefix position.
  Eigen::VectorXd prefill(const nn::Matrix& embeddings, const AttentionMask& mask);

  // Feeds one generated token; returns logits for the next position.
  Eigen::VectorXd step(int token_id);

  int position() const { return position_; }
  int capacity() const { return dec_->config().max_context; }

 private:
  Eigen::VectorXd forward_rows(const nn::Matrix& x_in, const AttentionMask* prefix_mask);

  const Decoder* dec_;
  const nn::ParamStore* store_;
  std::vector<nn::Matrix> eff_wq_, eff_wk_, eff_wv_;  // merged adapters
  std::vector<nn::Matrix> k_cache_, v_cache_;         // per layer, grows by rows
  std::vector<bool> col_allowed_;                     // pad columns stay masked
  int position_ = 0;
};

}  // namespace vqlm::decoder
