// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/decoder.h"

#include <gtest/gtest.h>

#include <random>

#include "test_support.h"
#include "vqlm/errors.h"
#include "vqlm/nn/adam.h"
#include "vqlm/tokenizer.h"

namespace vqlm::decoder {
namespace {

using encoders::EmbeddingSequence;
using encoders::Segment;
using nn::Matrix;
using nn::ParamStore;
using nn::Tape;
using nn::Tensor;

DecoderConfig tiny_config() {
  DecoderConfig cfg;
  cfg.layers = 2;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.mlp_dim = 32;
  cfg.max_context = 96;
  cfg.max_prompt = 64;
  cfg.max_output = 32;
  cfg.lora_rank = 2;
  return cfg;
}

struct DecoderRig {
  ParamStore store;
  std::unique_ptr<Decoder> dec;

  explicit DecoderRig(const DecoderConfig& cfg = tiny_config(), uint64_t seed = 17) {
    dec = std::make_unique<Decoder>(store, "dec", cfg);
    std::mt19937_64 rng(seed);
    dec->init(store, rng);
  }
};

EmbeddingSequence visual_block(int rows, int dim, uint64_t seed, Segment seg = Segment::kHigh,
                               bool padding = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, dim);
  for (Eigen::Index j = 0; j < m.size(); ++j) m(j) = dist(rng);
  EmbeddingSequence seq;
  seq.tokens = Tensor::constant(std::move(m));
  seq.segment = seg;
  seq.is_padding = padding;
  return seq;
}

TEST(Tokenizer, RoundTripPrintable) {
  const std::vector<std::string> corpus = {
      "Hello, world!", "The quick brown fox jumps over 13 lazy dogs.",
      "score: 4.25 (good)", "", "line\nbreak\tand tab"};
  for (const auto& s : corpus) {
    EXPECT_EQ(ByteTokenizer::decode(ByteTokenizer::encode(s)), s);
  }
}

TEST(Tokenizer, SpecialsAndBounds) {
  EXPECT_EQ(ByteTokenizer::kVocab, 259);
  EXPECT_TRUE(ByteTokenizer::is_special(ByteTokenizer::kBos));
  EXPECT_FALSE(ByteTokenizer::is_special(255));
  EXPECT_THROW(ByteTokenizer::check_ids({259}), InputError);
  EXPECT_THROW(ByteTokenizer::check_ids({-1}), InputError);
  // Specials are dropped on decode.
  EXPECT_EQ(ByteTokenizer::decode({ByteTokenizer::kBos, 'h', 'i', ByteTokenizer::kEos}), "hi");
}

TEST(EmbedText, Basics) {
  DecoderRig rig;
  Tape tape(rig.store);
  const auto empty = rig.dec->embed_text(tape, {});
  EXPECT_EQ(empty.tokens.rows(), 0);
  EXPECT_EQ(empty.tokens.cols(), 16);

  const auto twice = rig.dec->embed_text(tape, {65, 65});
  EXPECT_EQ((twice.tokens.value().row(0) - twice.tokens.value().row(1)).cwiseAbs().maxCoeff(),
            0.0);

  const auto last = rig.dec->embed_text(tape, {ByteTokenizer::kVocab - 1});
  const Matrix& table = rig.store.at(rig.dec->token_embedding_id()).value;
  EXPECT_EQ((last.tokens.value().row(0) - table.row(ByteTokenizer::kVocab - 1))
                .cwiseAbs()
                .maxCoeff(),
            0.0);
  EXPECT_THROW(rig.dec->embed_text(tape, {400}), InputError);
}

TEST(Mask, PurePrefixAllTrue) {
  // 1 frame (T_h=4, T_l=4), prompt 3, no target: S=11, all-true mask.
  const AttentionMask m = build_attention_mask(11, 11, {});
  EXPECT_EQ(m.prefix_len, 11);
  for (int p = 0; p < 11; ++p) {
    for (int q = 0; q < 11; ++q) {
      EXPECT_TRUE(m.allowed(p, q));
    }
  }
}

TEST(Mask, CausalSuffix) {
  // Same plus a 2-token target: rows 11, 12 are causal.
  const AttentionMask m = build_attention_mask(13, 11, {});
  EXPECT_FALSE(m.allowed(11, 12));
  EXPECT_TRUE(m.allowed(12, 11));
  EXPECT_TRUE(m.allowed(11, 11));
  for (int q = 0; q < 11; ++q) EXPECT_TRUE(m.allowed(11, q));
  // Prefix rows never see the suffix.
  for (int p = 0; p < 11; ++p) {
    EXPECT_FALSE(m.allowed(p, 11));
    EXPECT_FALSE(m.allowed(p, 12));
  }
}

TEST(Mask, PadSpansAllFalse) {
  const AttentionMask m = build_attention_mask(10, 8, {{2, 3}});
  for (int i = 2; i < 5; ++i) {
    for (int q = 0; q < 10; ++q) {
      EXPECT_FALSE(m.allowed(i, q));
      EXPECT_FALSE(m.allowed(q, i));
    }
  }
  EXPECT_TRUE(m.allowed(0, 1));
  EXPECT_TRUE(m.allowed(9, 8));
}

TEST(Mask, RandomizedInvariants) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const int total = 4 + static_cast<int>(rng() % 40);
    const int prefix = 1 + static_cast<int>(rng() % total);
    std::vector<std::pair<int, int>> spans;
    if (prefix > 2 && rng() % 2 == 0) {
      const int start = static_cast<int>(rng() % (prefix - 1));
      const int len = 1 + static_cast<int>(rng() % (prefix - start - 1));
      spans.emplace_back(start, len);
    }
    const AttentionMask m = build_attention_mask(total, prefix, spans);
    auto padded = [&](int i) {
      for (const auto& [s, l] : spans) {
        if (i >= s && i < s + l) return true;
      }
      return false;
    };
    for (int p = 0; p < total; ++p) {
      for (int q = 0; q < total; ++q) {
        if (padded(p) || padded(q)) {
          EXPECT_FALSE(m.allowed(p, q));
        } else if (p < prefix && q < prefix) {
          EXPECT_TRUE(m.allowed(p, q));
          EXPECT_EQ(m.allowed(p, q), m.allowed(q, p));
        } else if (p >= prefix) {
          EXPECT_EQ(m.allowed(p, q), q <= p);
        } else {
          EXPECT_FALSE(m.allowed(p, q));
        }
      }
    }
  }
}

TEST(PrefixSequence, LayoutAndLimits) {
  DecoderRig rig;
  Tape tape(rig.store);
  std::vector<EmbeddingSequence> visuals = {visual_block(4, 16, 1), visual_block(4, 16, 2)};
  const std::vector<int> prompt = {ByteTokenizer::kBos, 'q', '?'};
  const std::vector<int> target = {'o', 'k', ByteTokenizer::kEos};
  const PrefixSequence seq = rig.dec->build_prefix_sequence(tape, visuals, prompt, target);
  EXPECT_EQ(seq.prefix_len, 8 + 3);
  EXPECT_EQ(seq.total_len, 8 + 3 + 3);
  EXPECT_EQ(seq.embeddings.rows(), seq.total_len);
  EXPECT_EQ(seq.target_len, 3);

  // Context overflow names the limit.
  std::vector<EmbeddingSequence> big = {visual_block(96, 16, 3)};
  try {
    rig.dec->build_prefix_sequence(tape, big, prompt, {});
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("96"), std::string::npos) << e.what();
  }

  // Dim mismatch rejected.
  std::vector<EmbeddingSequence> wrong = {visual_block(4, 8, 4)};
  EXPECT_THROW(rig.dec->build_prefix_sequence(tape, wrong, prompt, {}), InputError);
}

TEST(Decoder, DeterministicLogitsAndSoftmaxNormalization) {
  DecoderRig rig;
  std::vector<EmbeddingSequence> visuals = {visual_block(4, 16, 5), visual_block(4, 16, 6)};
  const std::vector<int> prompt = {ByteTokenizer::kBos, 'a'};
  Matrix first;
  for (int run = 0; run < 2; ++run) {
    Tape tape(rig.store);
    const PrefixSequence seq = rig.dec->build_prefix_sequence(tape, visuals, prompt, {});
    const Tensor hidden = rig.dec->forward_hidden(tape, seq.embeddings, seq.mask_bias);
    const Tensor logits = rig.dec->logits_rows(tape, hidden, seq.total_len - 1, 1);
    EXPECT_TRUE(logits.value().allFinite());
    const Tensor probs = nn::softmax_rows(logits);
    EXPECT_NEAR(probs.value().sum(), 1.0, 1e-6);
    if (run == 0) {
      first = logits.value();
    } else {
      EXPECT_EQ((first - logits.value()).cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

// Fig. 4a case II: outputs must not depend on the duplicated pad content.
TEST(Decoder, PadContentInvariance) {
  DecoderRig rig;
  const std::vector<int> prompt = {ByteTokenizer::kBos, 'h', 'o', 'w'};
  const std::vector<int> target = {'f', 'i', 'n', 'e', ByteTokenizer::kEos};
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const uint64_t real_seed = rng();
    std::vector<EmbeddingSequence> a = {
        visual_block(4, 16, real_seed, Segment::kHigh),
        visual_block(4, 16, real_seed + 1, Segment::kLow),
        visual_block(4, 16, rng(), Segment::kHigh, /*padding=*/true),
        visual_block(4, 16, rng(), Segment::kLow, /*padding=*/true)};
    std::vector<EmbeddingSequence> b = a;
    b[2] = visual_block(4, 16, rng(), Segment::kHigh, true);
    b[3] = visual_block(4, 16, rng(), Segment::kLow, true);

    Tape ta(rig.store), tb(rig.store);
    const PrefixSequence sa = rig.dec->build_prefix_sequence(ta, a, prompt, target);
    const PrefixSequence sb = rig.dec->build_prefix_sequence(tb, b, prompt, target);
    const Matrix la =
        rig.dec->logits_rows(ta, rig.dec->forward_hidden(ta, sa.embeddings, sa.mask_bias),
                             sa.prefix_len - 1, sa.target_len)
            .value();
    const Matrix lb =
        rig.dec->logits_rows(tb, rig.dec->forward_hidden(tb, sb.embeddings, sb.mask_bias),
                             sb.prefix_len - 1, sb.target_len)
            .value();
    EXPECT_LE((la - lb).cwiseAbs().maxCoeff(), 1e-6);
  }
}

// Suffix causality: logits at a target position ignore later targets.
TEST(Decoder, CausalityPerturbation) {
  DecoderRig rig;
  std::vector<EmbeddingSequence> visuals = {visual_block(4, 16, 41), visual_block(4, 16, 42)};
  const std::vector<int> prompt = {ByteTokenizer::kBos, 'x'};
  const std::vector<int> t1 = {'a', 'b', 'c', ByteTokenizer::kEos};
  std::vector<int> t2 = t1;
  t2[2] = 'z';  // change the third target token

  Tape ta(rig.store), tb(rig.store);
  const PrefixSequence sa = rig.dec->build_prefix_sequence(ta, visuals, prompt, t1);
  const PrefixSequence sb = rig.dec->build_prefix_sequence(tb, visuals, prompt, t2);
  const Matrix la =
      rig.dec->logits_rows(ta, rig.dec->forward_hidden(ta, sa.embeddings, sa.mask_bias),
                           sa.prefix_len - 1, sa.target_len)
          .value();
  const Matrix lb =
      rig.dec->logits_rows(tb, rig.dec->forward_hidden(tb, sb.embeddings, sb.mask_bias),
                           sb.prefix_len - 1, sb.target_len)
          .value();
  // Rows predicting tokens before the change are identical.
  EXPECT_EQ((la.topRows(2) - lb.topRows(2)).cwiseAbs().maxCoeff(), 0.0);
  // The changed input does alter later rows (sanity that the test bites).
  EXPECT_GT((la.row(3) - lb.row(3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Lora, ZeroAdapterKeepsBase) {
  std::mt19937_64 rng(51);
  Matrix base(8, 8), a(8, 2);
  for (Eigen::Index i = 0; i < base.size(); ++i) base(i) = std::normal_distribution<double>()(rng);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = std::normal_distribution<double>()(rng);
  const Matrix zero = Matrix::Zero(2, 8);
  const Matrix eff = apply_lora_plain(base, a, zero, 0.5);
  EXPECT_EQ((eff - base).cwiseAbs().maxCoeff(), 0.0);

  const Tensor teff = apply_lora(Tensor::constant(base), Tensor::constant(a),
                                 Tensor::constant(zero), 0.5);
  EXPECT_EQ((teff.value() - base).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Lora, ParameterCountAndRankValidation) {
  // R=4, d=64: 2*64*4 extra parameters per adapted matrix.
  DecoderConfig cfg = tiny_config();
  cfg.embed_dim = 64;
  cfg.heads = 4;
  cfg.lora_rank = 4;
  ParamStore store;
  Decoder dec(store, "dec", cfg);
  int64_t lora_values = 0;
  for (int i = 0; i < store.size(); ++i) {
    if (store.at(i).group == nn::ParamGroup::kDecoderLora) {
      lora_values += store.at(i).value.size();
    }
  }
  // 3 adapted matrices (q, k, v) per layer.
  EXPECT_EQ(lora_values, static_cast<int64_t>(cfg.layers) * 3 * 2 * 64 * 4);

  DecoderConfig bad = tiny_config();
  bad.lora_rank = 99;  // > embed_dim
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Generate, EmptyAndDeterministic) {
  DecoderRig rig;
  Tape tape(rig.store);
  std::vector<EmbeddingSequence> visuals = {visual_block(4, 16, 61), visual_block(4, 16, 62)};
  const PrefixSequence seq =
      rig.dec->build_prefix_sequence(tape, visuals, {ByteTokenizer::kBos, 'g'}, {});
  EXPECT_TRUE(rig.dec->generate(rig.store, seq, 0).ids.empty());
  const GenerationResult r1 = rig.dec->generate(rig.store, seq, 12);
  const GenerationResult r2 = rig.dec->generate(rig.store, seq, 12);
  EXPECT_EQ(r1.ids, r2.ids);
}

// The incremental KV-cache session must match the full tape forward.
TEST(Generate, SessionMatchesTapeForward) {
  DecoderRig rig;
  std::vector<EmbeddingSequence> visuals = {
      visual_block(4, 16, 71), visual_block(4, 16, 72),
      visual_block(4, 16, 73, Segment::kHigh, true), visual_block(4, 16, 74, Segment::kLow, true)};
  const std::vector<int> prompt = {ByteTokenizer::kBos, 'o', 'k'};
  const std::vector<int> target = {'y', 'e', 's'};

  // Tape path: full sequence with teacher forcing.
  Tape tape(rig.store);
  const PrefixSequence full = rig.dec->build_prefix_sequence(tape, visuals, prompt, target);
  const Matrix tape_logits =
      rig.dec->logits_rows(tape, rig.dec->forward_hidden(tape, full.embeddings, full.mask_bias),
                           full.prefix_len - 1, full.target_len + 1)
          .value();

  // Session path: prefill the prefix, then feed target tokens one by one.
  Tape tape2(rig.store);
  const PrefixSequence prefix = rig.dec->build_prefix_sequence(tape2, visuals, prompt, {});
  DecoderSession session(*rig.dec, rig.store);
  Eigen::VectorXd logits = session.prefill(prefix.embeddings.value(), prefix.mask);
  EXPECT_LE((logits.transpose() - tape_logits.row(0)).cwiseAbs().maxCoeff(), 1e-9);
  for (size_t k = 0; k < target.size(); ++k) {
    logits = session.step(target[k]);
    EXPECT_LE((logits.transpose() - tape_logits.row(static_cast<Eigen::Index>(k) + 1))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-9)
        << "step " << k;
  }
}

// A model fine-tuned on a single fixed caption reproduces it verbatim.
TEST(Generate, OverfitSingleCaption) {
  DecoderConfig cfg;
  cfg.layers = 1;
  cfg.embed_dim = 32;
  cfg.heads = 2;
  cfg.mlp_dim = 64;
  cfg.max_context = 128;
  cfg.lora_rank = 2;
  DecoderRig rig(cfg, /*seed=*/77);

  const std::string caption = "Quality is good.";
  std::vector<int> target = ByteTokenizer::encode(caption);
  target.push_back(ByteTokenizer::kEos);
  const std::vector<int> prompt = {ByteTokenizer::kBos, 'd', 'e', 's', 'c'};
  std::vector<EmbeddingSequence> visuals = {visual_block(4, 32, 81), visual_block(4, 32, 82)};

  nn::Adam adam(3e-3);
  for (int step = 0; step < 400; ++step) {
    Tape tape(rig.store);
    const PrefixSequence seq = rig.dec->build_prefix_sequence(tape, visuals, prompt, target);
    const Tensor hidden = rig.dec->forward_hidden(tape, seq.embeddings, seq.mask_bias);
    const Tensor logits = rig.dec->logits_rows(tape, hidden, seq.prefix_len - 1, seq.target_len);
    const Tensor nll = nn::pick_nll(nn::log_softmax_rows(logits), target, 1e9);
    nn::backward(nll);
    rig.store.zero_grads();
    std::vector<Matrix> sink(static_cast<size_t>(rig.store.size()));
    tape.collect(sink);
    for (int i = 0; i < rig.store.size(); ++i) {
      if (sink[static_cast<size_t>(i)].size() != 0) {
        rig.store.at(i).grad = sink[static_cast<size_t>(i)];
      }
    }
    adam.step(rig.store);
  }

  Tape tape(rig.store);
  const PrefixSequence seq = rig.dec->build_prefix_sequence(tape, visuals, prompt, {});
  const GenerationResult out = rig.dec->generate(rig.store, seq, 64);
  EXPECT_EQ(ByteTokenizer::decode(out.ids), caption);
  EXPECT_FALSE(out.truncated);
}

}  // namespace
}  // namespace vqlm::decoder
