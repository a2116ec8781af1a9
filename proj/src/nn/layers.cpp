// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/nn/layers.h"

#include <cmath>

#include "vqlm/errors.h"

namespace vqlm::nn {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

AttentionMaskBias mask_bias_from_bool(
    const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& allowed) {
  const Eigen::Index s = allowed.rows();
  Matrix bias = Matrix::Zero(s, s);
  Matrix keep = Matrix::Ones(s, s);
  for (Eigen::Index r = 0; r < s; ++r) {
    bool any = false;
    for (Eigen::Index c = 0; c < s; ++c) {
      if (allowed(r, c)) {
        any = true;
      } else {
        bias(r, c) = -1e9;
      }
    }
    if (!any) keep.row(r).setZero();
  }
  AttentionMaskBias out;
  out.bias = Tensor::constant(std::move(bias));
  out.row_keep = Tensor::constant(std::move(keep));
  out.active = true;
  return out;
}

Tensor multihead_attention(const Tensor& x, int heads, const Tensor& wq, const Tensor& bq,
                           const Tensor& wk, const Tensor& bk, const Tensor& wv,
                           const Tensor& bv, const Tensor& wo, const Tensor& bo,
                           const AttentionMaskBias* mask) {
  const Eigen::Index dim = x.cols();
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("attention: model_dim must be divisible by heads");
  }
  const Eigen::Index dh = dim / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tensor q = linear(x, wq, bq);
  const Tensor k = linear(x, wk, bk);
  const Tensor v = linear(x, wv, bv);

  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, dh);
    const Tensor kh = slice_cols(k, h * dh, dh);
    const Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    if (mask != nullptr && mask->active) {
      scores = add(scores, mask->bias);
    }
    Tensor probs = softmax_rows(scores);
    if (mask != nullptr && mask->active) {
      probs = hadamard(probs, mask->row_keep);
    }
    head_outs.push_back(matmul(probs, vh));
  }
  const Tensor ctx = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  return linear(ctx, wo, bo);
}

TransformerBlockIds register_block(ParamStore& store, const std::string& prefix, int dim,
                                   int mlp_dim, ParamGroup group) {
  TransformerBlockIds ids;
  ids.ln1_g = store.add(prefix + ".ln1.gamma", 1, dim, group);
  ids.ln1_b = store.add(prefix + ".ln1.beta", 1, dim, group);
  ids.wq = store.add(prefix + ".attn.wq", dim, dim, group);
  ids.bq = store.add(prefix + ".attn.bq", 1, dim, group);
  ids.wk = store.add(prefix + ".attn.wk", dim, dim, group);
  ids.bk = store.add(prefix + ".attn.bk", 1, dim, group);
  ids.wv = store.add(prefix + ".attn.wv", dim, dim, group);
  ids.bv = store.add(prefix + ".attn.bv", 1, dim, group);
  ids.wo = store.add(prefix + ".attn.wo", dim, dim, group);
  ids.bo = store.add(prefix + ".attn.bo", 1, dim, group);
  ids.ln2_g = store.add(prefix + ".ln2.gamma", 1, dim, group);
  ids.ln2_b = store.add(prefix + ".ln2.beta", 1, dim, group);
  ids.w1 = store.add(prefix + ".mlp.w1", dim, mlp_dim, group);
  ids.b1 = store.add(prefix + ".mlp.b1", 1, mlp_dim, group);
  ids.w2 = store.add(prefix + ".mlp.w2", mlp_dim, dim, group);
  ids.b2 = store.add(prefix + ".mlp.b2", 1, dim, group);
  return ids;
}

void init_block(ParamStore& store, const TransformerBlockIds& ids, std::mt19937_64& rng) {
  auto winit = [&](int id) {
    Matrix& m = store.at(id).value;
    init_normal(m, rng, 1.0 / std::sqrt(static_cast<double>(m.rows())));
  };
  init_const(store.at(ids.ln1_g).value, 1.0);
  init_zero(store.at(ids.ln1_b).value);
  winit(ids.wq);
  winit(ids.wk);
  winit(ids.wv);
  winit(ids.wo);
  init_zero(store.at(ids.bq).value);
  init_zero(store.at(ids.bk).value);
  init_zero(store.at(ids.bv).value);
  init_zero(store.at(ids.bo).value);
  init_const(store.at(ids.ln2_g).value, 1.0);
  init_zero(store.at(ids.ln2_b).value);
  winit(ids.w1);
  winit(ids.w2);
  init_zero(store.at(ids.b1).value);
  init_zero(store.at(ids.b2).value);
}

Tensor run_block(Tape& tape, const Tensor& x, const TransformerBlockIds& ids, int heads,
                 const AttentionMaskBias* mask, const EffectiveQkv* eff) {
  const Tensor h1 = layer_norm_rows(x, tape.param(ids.ln1_g), tape.param(ids.ln1_b));
  Tensor wq = tape.param(ids.wq);
  Tensor wk = tape.param(ids.wk);
  Tensor wv = tape.param(ids.wv);
  if (eff != nullptr && eff->set) {
    wq = eff->wq;
    wk = eff->wk;
    wv = eff->wv;
  }
  const Tensor attn =
      multihead_attention(h1, heads, wq, tape.param(ids.bq), wk, tape.param(ids.bk), wv,
                          tape.param(ids.bv), tape.param(ids.wo), tape.param(ids.bo), mask);
  const Tensor x1 = add(x, attn);
  const Tensor h2 = layer_norm_rows(x1, tape.param(ids.ln2_g), tape.param(ids.ln2_b));
  const Tensor mlp = linear(relu(linear(h2, tape.param(ids.w1), tape.param(ids.b1))),
                            tape.param(ids.w2), tape.param(ids.b2));
  return add(x1, mlp);
}

}  // namespace vqlm::nn
