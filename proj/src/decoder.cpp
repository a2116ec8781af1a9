// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/decoder.h"

#include <cmath>

#include "vqlm/errors.h"

namespace vqlm::decoder {

using nn::Matrix;
using nn::Tensor;

const char* const kDefaultPrompt =
    "Based on the provided video frames, create a three-sentence summary. First, describe the "
    "visual content of the video in detail. Second, identify the style of the video. Third, "
    "assess the technical quality.";

const char* const kComparePrompt =
    "Based on the provided frames from two videos, compare their technical quality and state "
    "which video looks better.";

void DecoderConfig::validate() const {
  if (layers < 1) throw ConfigError("decoder: layers must be >= 1");
  if (heads < 1 || embed_dim % heads != 0) {
    throw ConfigError("decoder: embed_dim must be divisible by heads");
  }
  if (lora_rank < 1) throw ConfigError("decoder: lora_rank must be >= 1");
  if (lora_rank > embed_dim) {
    throw ConfigError("decoder: lora_rank " + std::to_string(lora_rank) +
                      " exceeds projection dim " + std::to_string(embed_dim));
  }
  if (max_context < 8) throw ConfigError("decoder: max_context too small");
}

AttentionMask build_attention_mask(int total_len, int prefix_len,
                                   const std::vector<std::pair<int, int>>& pad_spans) {
  if (prefix_len < 0 || prefix_len > total_len) {
    throw InputError("build_attention_mask: prefix_len out of range");
  }
  AttentionMask m;
  m.prefix_len = prefix_len;
  m.allowed.resize(total_len, total_len);
  for (int p = 0; p < total_len; ++p) {
    for (int q = 0; q < total_len; ++q) {
      m.allowed(p, q) = p < prefix_len ? (q < prefix_len) : (q <= p);
    }
  }
  for (const auto& [start, len] : pad_spans) {
    if (start < 0 || start + len > total_len) {
      throw InputError("build_attention_mask: pad span out of range");
    }
    for (int i = start; i < start + len; ++i) {
      m.allowed.row(i).setConstant(false);
      m.allowed.col(i).setConstant(false);
    }
  }
  return m;
}

Tensor apply_lora(const Tensor& base, const Tensor& a, const Tensor& b, double scale) {
  if (a.rows() != base.rows() || b.cols() != base.cols() || a.cols() != b.rows()) {
    throw ConfigError("apply_lora: factor shapes incompatible with base");
  }
  return nn::add(base, nn::scale(nn::matmul(a, b), scale));
}

Matrix apply_lora_plain(const Matrix& base, const Matrix& a, const Matrix& b, double scale) {
  return base + scale * (a * b);
}

Decoder::Decoder(nn::ParamStore& store, const std::string& prefix, const DecoderConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.embed_dim;
  tok_emb_ = store.add(prefix + ".tok_emb", ByteTokenizer::kVocab, d,
                       nn::ParamGroup::kDecoderBase);
  pos_ = store.add(prefix + ".pos", cfg_.max_context, d, nn::ParamGroup::kDecoderBase);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string bp = prefix + ".block" + std::to_string(l);
    blocks_.push_back(
        nn::register_block(store, bp, d, cfg_.mlp_dim, nn::ParamGroup::kDecoderBase));
    LoraIds ids;
    ids.aq = store.add(bp + ".lora.aq", d, cfg_.lora_rank, nn::ParamGroup::kDecoderLora);
    ids.bq = store.add(bp + ".lora.bq", cfg_.lora_rank, d, nn::ParamGroup::kDecoderLora);
    ids.ak = store.add(bp + ".lora.ak", d, cfg_.lora_rank, nn::ParamGroup::kDecoderLora);
    ids.bk = store.add(bp + ".lora.bk", cfg_.lora_rank, d, nn::ParamGroup::kDecoderLora);
    ids.av = store.add(bp + ".lora.av", d, cfg_.lora_rank, nn::ParamGroup::kDecoderLora);
    ids.bv = store.add(bp + ".lora.bv", cfg_.lora_rank, d, nn::ParamGroup::kDecoderLora);
    lora_.push_back(ids);
  }
  final_ln_g_ = store.add(prefix + ".final_ln.gamma", 1, d, nn::ParamGroup::kDecoderBase);
  final_ln_b_ = store.add(prefix + ".final_ln.beta", 1, d, nn::ParamGroup::kDecoderBase);
  out_w_ = store.add(prefix + ".out.w", d, ByteTokenizer::kVocab, nn::ParamGroup::kDecoderBase);
  out_b_ = store.add(prefix + ".out.b", 1, ByteTokenizer::kVocab, nn::ParamGroup::kDecoderBase);
}

void Decoder::init(nn::ParamStore& store, std::mt19937_64& rng) const {
  nn::init_normal(store.at(tok_emb_).value, rng, 0.02);
  nn::init_normal(store.at(pos_).value, rng, 0.02);
  for (size_t l = 0; l < blocks_.size(); ++l) {
    nn::init_block(store, blocks_[l], rng);
    // A gaussian, B zero: adapters start as the identity adaptation.
    nn::init_normal(store.at(lora_[l].aq).value, rng, 0.02);
    nn::init_zero(store.at(lora_[l].bq).value);
    nn::init_normal(store.at(lora_[l].ak).value, rng, 0.02);
    nn::init_zero(store.at(lora_[l].bk).value);
    nn::init_normal(store.at(lora_[l].av).value, rng, 0.02);
    nn::init_zero(store.at(lora_[l].bv).value);
  }
  nn::init_const(store.at(final_ln_g_).value, 1.0);
  nn::init_zero(store.at(final_ln_b_).value);
  Matrix& ow = store.at(out_w_).value;
  nn::init_normal(ow, rng, 1.0 / std::sqrt(static_cast<double>(ow.rows())));
  nn::init_zero(store.at(out_b_).value);
}

int Decoder::lora_a_id(int layer, int which) const {
  const LoraIds& ids = lora_[static_cast<size_t>(layer)];
  return which == 0 ? ids.aq : which == 1 ? ids.ak : ids.av;
}

int Decoder::lora_b_id(int layer, int which) const {
  const LoraIds& ids = lora_[static_cast<size_t>(layer)];
  return which == 0 ? ids.bq : which == 1 ? ids.bk : ids.bv;
}

encoders::EmbeddingSequence Decoder::embed_text(nn::Tape& tape,
                                                const std::vector<int>& ids) const {
  ByteTokenizer::check_ids(ids);
  encoders::EmbeddingSequence seq;
  seq.segment = encoders::Segment::kText;
  if (ids.empty()) {
    seq.tokens = Tensor::constant(Matrix::Zero(0, cfg_.embed_dim));
  } else {
    seq.tokens = nn::gather_rows(tape.param(tok_emb_), ids);
  }
  return seq;
}

PrefixSequence Decoder::build_prefix_sequence(
    nn::Tape& tape, const std::vector<encoders::EmbeddingSequence>& visuals,
    const std::vector<int>& prompt_ids, const std::vector<int>& target_ids) const {
  if (static_cast<int>(prompt_ids.size()) > cfg_.max_prompt) {
    throw InputError("prompt length " + std::to_string(prompt_ids.size()) +
                     " exceeds the decoder prompt limit of " + std::to_string(cfg_.max_prompt));
  }
  std::vector<Tensor> parts;
  std::vector<std::pair<int, int>> pad_spans;
  int at = 0;
  for (const auto& vis : visuals) {
    if (vis.tokens.cols() != cfg_.embed_dim) {
      throw InputError("visual embedding dim " + std::to_string(vis.tokens.cols()) +
                       " does not match decoder dim " + std::to_string(cfg_.embed_dim));
    }
    const int len = static_cast<int>(vis.tokens.rows());
    if (vis.is_padding) pad_spans.emplace_back(at, len);
    parts.push_back(vis.tokens);
    at += len;
  }
  const int visual_len = at;
  parts.push_back(embed_text(tape, prompt_ids).tokens);
  if (!target_ids.empty()) {
    parts.push_back(embed_text(tape, target_ids).tokens);
  }
  const int prefix_len = visual_len + static_cast<int>(prompt_ids.size());
  const int total_len = prefix_len + static_cast<int>(target_ids.size());
  if (total_len > cfg_.max_context) {
    throw InputError("sequence length " + std::to_string(total_len) +
                     " exceeds the decoder context limit of " + std::to_string(cfg_.max_context));
  }
  PrefixSequence seq;
  seq.embeddings = concat_rows(parts);
  seq.mask = build_attention_mask(total_len, prefix_len, pad_spans);
  seq.mask_bias = nn::mask_bias_from_bool(seq.mask.allowed);
  seq.prefix_len = prefix_len;
  seq.total_len = total_len;
  seq.target_len = static_cast<int>(target_ids.size());
  return seq;
}

nn::EffectiveQkv Decoder::effective_qkv(nn::Tape& tape, int layer) const {
  const double s = 1.0 / static_cast<double>(cfg_.lora_rank);
  const LoraIds& ids = lora_[static_cast<size_t>(layer)];
  const nn::TransformerBlockIds& b = blocks_[static_cast<size_t>(layer)];
  nn::EffectiveQkv eff;
  eff.wq = apply_lora(tape.param(b.wq), tape.param(ids.aq), tape.param(ids.bq), s);
  eff.wk = apply_lora(tape.param(b.wk), tape.param(ids.ak), tape.param(ids.bk), s);
  eff.wv = apply_lora(tape.param(b.wv), tape.param(ids.av), tape.param(ids.bv), s);
  eff.set = true;
  return eff;
}

nn::Tensor Decoder::forward_hidden(nn::Tape& tape, const Tensor& embeddings,
                                   const nn::AttentionMaskBias& mask) const {
  const int s = static_cast<int>(embeddings.rows());
  Tensor x = nn::add(embeddings, nn::slice_rows(tape.param(pos_), 0, s));
  for (int l = 0; l < cfg_.layers; ++l) {
    const nn::EffectiveQkv eff = effective_qkv(tape, l);
    x = nn::run_block(tape, x, blocks_[static_cast<size_t>(l)], cfg_.heads, &mask, &eff);
    if (!x.value().allFinite()) {
      throw NumericError("decoder block " + std::to_string(l) +
                         " produced non-finite activations");
    }
  }
  return nn::layer_norm_rows(x, tape.param(final_ln_g_), tape.param(final_ln_b_));
}

nn::Tensor Decoder::logits_rows(nn::Tape& tape, const Tensor& hidden, int start, int n) const {
  return nn::linear(nn::slice_rows(hidden, start, n), tape.param(out_w_), tape.param(out_b_));
}

GenerationResult Decoder::generate(const nn::ParamStore& store, const PrefixSequence& prefix,
                                   int max_len, DecodeStrategy strategy,
                                   uint64_t sample_seed) const {
  GenerationResult result;
  if (max_len <= 0) return result;
  DecoderSession session(*this, store);
  Eigen::VectorXd logits = session.prefill(prefix.embeddings.value(), prefix.mask);
  std::mt19937_64 rng(sample_seed);
  for (int i = 0; i < max_len; ++i) {
    int next = 0;
    if (strategy == DecodeStrategy::kGreedy) {
      logits.maxCoeff(&next);
    } else {
      Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
      p /= p.sum();
      std::discrete_distribution<int> dist(p.data(), p.data() + p.size());
      next = dist(rng);
    }
    if (next == ByteTokenizer::kEos) break;
    result.ids.push_back(next);
    if (session.position() >= session.capacity()) {
      result.truncated = true;
      break;
    }
    logits = session.step(next);
  }
  return result;
}

// ---- incremental session ----

namespace {

void ln_rows_plain(Matrix& x, const Matrix& gamma, const Matrix& beta, double eps = 1e-6) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    x.row(r) = ((x.row(r).array() - mu) / std::sqrt(var + eps)) * gamma.row(0).array() +
               beta.row(0).array();
  }
}

}  // namespace

DecoderSession::DecoderSession(const Decoder& dec, const nn::ParamStore& store)
    : dec_(&dec), store_(&store) {
  const auto& cfg = dec.cfg_;
  const double s = 1.0 / static_cast<double>(cfg.lora_rank);
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& b = dec.blocks_[static_cast<size_t>(l)];
    const auto& ids = dec.lora_[static_cast<size_t>(l)];
    eff_wq_.push_back(apply_lora_plain(store.at(b.wq).value, store.at(ids.aq).value,
                                       store.at(ids.bq).value, s));
    eff_wk_.push_back(apply_lora_plain(store.at(b.wk).value, store.at(ids.ak).value,
                                       store.at(ids.bk).value, s));
    eff_wv_.push_back(apply_lora_plain(store.at(b.wv).value, store.at(ids.av).value,
                                       store.at(ids.bv).value, s));
    k_cache_.emplace_back(0, cfg.embed_dim);
    v_cache_.emplace_back(0, cfg.embed_dim);
  }
}

Eigen::VectorXd DecoderSession::prefill(const Matrix& embeddings, const AttentionMask& mask) {
  if (position_ != 0) throw InputError("prefill called on a running session");
  if (embeddings.rows() != mask.allowed.rows()) {
    throw InputError("prefill: mask size does not match embeddings");
  }
  col_allowed_.assign(static_cast<size_t>(embeddings.rows()), true);
  for (int i = 0; i < embeddings.rows(); ++i) {
    bool any = false;
    for (int j = 0; j < embeddings.rows(); ++j) {
      if (mask.allowed(j, i)) {
        any = true;
        break;
      }
    }
    if (!any) col_allowed_[static_cast<size_t>(i)] = false;
  }
  return forward_rows(embeddings, &mask);
}

Eigen::VectorXd DecoderSession::step(int token_id) {
  if (position_ == 0) throw InputError("step called before prefill");
  if (token_id < 0 || token_id >= ByteTokenizer::kVocab) {
    throw InputError("step: token id out of range");
  }
  if (position_ >= dec_->cfg_.max_context) {
    throw InputError("step: decoder context limit of " +
                     std::to_string(dec_->cfg_.max_context) + " reached");
  }
  Matrix row = store_->at(dec_->tok_emb_).value.row(token_id);
  col_allowed_.push_back(true);
  return forward_rows(row, nullptr);
}

Eigen::VectorXd DecoderSession::forward_rows(const Matrix& x_in, const AttentionMask* prefix_mask) {
  const auto& cfg = dec_->cfg_;
  const auto& store = *store_;
  const int n = static_cast<int>(x_in.rows());
  const int base = position_;
  if (base + n > cfg.max_context) {
    throw InputError("sequence exceeds the decoder context limit of " +
                     std::to_string(cfg.max_context));
  }
  Matrix x = x_in + store.at(dec_->pos_).value.middleRows(base, n);
  const int heads = cfg.heads;
  const int dh = cfg.embed_dim / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int l = 0; l < cfg.layers; ++l) {
    const auto& b = dec_->blocks_[static_cast<size_t>(l)];
    Matrix h = x;
    ln_rows_plain(h, store.at(b.ln1_g).value, store.at(b.ln1_b).value);
    Matrix q = h * eff_wq_[static_cast<size_t>(l)];
    q.rowwise() += Eigen::RowVectorXd(store.at(b.bq).value.row(0));
    Matrix k = h * eff_wk_[static_cast<size_t>(l)];
    k.rowwise() += Eigen::RowVectorXd(store.at(b.bk).value.row(0));
    Matrix v = h * eff_wv_[static_cast<size_t>(l)];
    v.rowwise() += Eigen::RowVectorXd(store.at(b.bv).value.row(0));

    Matrix& kc = k_cache_[static_cast<size_t>(l)];
    Matrix& vc = v_cache_[static_cast<size_t>(l)];
    kc.conservativeResize(base + n, Eigen::NoChange);
    vc.conservativeResize(base + n, Eigen::NoChange);
    kc.middleRows(base, n) = k;
    vc.middleRows(base, n) = v;

    Matrix ctx(n, cfg.embed_dim);
    for (int hd = 0; hd < heads; ++hd) {
      const auto qh = q.middleCols(hd * dh, dh);
      const auto kh = kc.middleCols(hd * dh, dh);
      const auto vh = vc.middleCols(hd * dh, dh);
      for (int r = 0; r < n; ++r) {
        const int pos = base + r;
        // Prefill rows see the whole (bidirectional) prefix; generated rows
        // see everything cached so far, minus masked pad columns.
        const int n_keys = prefix_mask != nullptr ? static_cast<int>(kc.rows()) : pos + 1;
        Eigen::VectorXd scores = (kh.topRows(n_keys) * qh.row(r).transpose()) * inv_sqrt_dh;
        bool any = false;
        for (int c = 0; c < n_keys; ++c) {
          const bool ok = prefix_mask != nullptr ? prefix_mask->allowed(pos, c)
                                                 : col_allowed_[static_cast<size_t>(c)];
          if (ok) {
            any = true;
          } else {
            scores(c) = -1e9;
          }
        }
        if (any) {
          Eigen::VectorXd p = (scores.array() - scores.maxCoeff()).exp();
          p /= p.sum();
          ctx.block(r, hd * dh, 1, dh) = p.transpose() * vh.topRows(n_keys);
        } else {
          ctx.block(r, hd * dh, 1, dh).setZero();
        }
      }
    }
    Matrix attn = ctx * store.at(b.wo).value;
    attn.rowwise() += Eigen::RowVectorXd(store.at(b.bo).value.row(0));
    x += attn;
    Matrix h2 = x;
    ln_rows_plain(h2, store.at(b.ln2_g).value, store.at(b.ln2_b).value);
    Matrix m1 = h2 * store.at(b.w1).value;
    m1.rowwise() += Eigen::RowVectorXd(store.at(b.b1).value.row(0));
    m1 = m1.cwiseMax(0.0);
    Matrix m2 = m1 * store.at(b.w2).value;
    m2.rowwise() += Eigen::RowVectorXd(store.at(b.b2).value.row(0));
    x += m2;
  }
  ln_rows_plain(x, store.at(dec_->final_ln_g_).value, store.at(dec_->final_ln_b_).value);
  position_ = base + n;
  Eigen::VectorXd logits =
      (x.row(n - 1) * store.at(dec_->out_w_).value).transpose() +
      store.at(dec_->out_b_).value.row(0).transpose();
  if (!logits.allFinite()) throw NumericError("decoder session produced non-finite logits");
  return logits;
}

}  // namespace vqlm::decoder
