// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <random>
#include <string>

#include "vqlm/nn/param_store.h"
#include "vqlm/nn/tensor.h"

namespace vqlm::nn {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Additive attention-mask constants for masked row softmax. Rows with no
// allowed key are zeroed after the softmax so padding positions emit no
// attention output at all.
struct AttentionMaskBias {
  Tensor bias;      // SxS: 0 where allowed, -1e9 where masked
  Tensor row_keep;  // SxS: 0/1, zero rows for fully masked queries
  bool active = false;
};

AttentionMaskBias mask_bias_from_bool(
    const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& allowed);

// Standard multi-head self-attention over a TxD sequence. Weights arrive as
// tensors so callers can substitute adapter-augmented projections.
Tensor multihead_attention(const Tensor& x, int heads, const Tensor& wq, const Tensor& bq,
                           const Tensor& wk, const Tensor& bk, const Tensor& wv,
                           const Tensor& bv, const Tensor& wo, const Tensor& bo,
                           const AttentionMaskBias* mask = nullptr);

// Parameter ids of one pre-LN transformer block.
struct TransformerBlockIds {
  int ln1_g, ln1_b;
  int wq, bq, wk, bk, wv, bv, wo, bo;
  int ln2_g, ln2_b;
  int w1, b1, w2, b2;
};

TransformerBlockIds register_block(ParamStore& store, const std::string& prefix, int dim,
                                   int mlp_dim, ParamGroup group);
void init_block(ParamStore& store, const TransformerBlockIds& ids, std::mt19937_64& rng);

// Optional replacement q/k/v projection weights (base + low-rank adapters).
struct EffectiveQkv {
  Tensor wq, wk, wv;
  bool set = false;
};

// x + attn(ln1(x)); x + mlp(ln2(x)). Returns the updated sequence.
Tensor run_block(Tape& tape, const Tensor& x, const TransformerBlockIds& ids, int heads,
                 const AttentionMaskBias* mask = nullptr, const EffectiveQkv* eff = nullptr);

}  // namespace vqlm::nn
