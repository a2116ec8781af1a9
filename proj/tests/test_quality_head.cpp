// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/quality_head.h"

#include <gtest/gtest.h>

#include <random>

#include "test_support.h"
#include "vqlm/errors.h"

namespace vqlm::quality {
namespace {

using encoders::EmbeddingSequence;
using encoders::Segment;
using nn::Matrix;
using nn::ParamStore;
using nn::Tape;
using nn::Tensor;

EmbeddingSequence embedding(const Matrix& m, Segment seg) {
  EmbeddingSequence seq;
  seq.tokens = Tensor::constant(m);
  seq.segment = seg;
  return seq;
}

EmbeddingSequence random_embedding(int rows, int dim, uint64_t seed, Segment seg) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return embedding(m, seg);
}

struct HeadRig {
  ParamStore store;
  std::unique_ptr<QualityHead> head;

  HeadRig(int dim, int hidden, uint64_t seed = 9) {
    head = std::make_unique<QualityHead>(store, "head", dim, QualityHeadConfig{hidden});
    std::mt19937_64 rng(seed);
    head->init(store, rng);
  }
};

TEST(QualityHead, HandComputedToyCase) {
  // D=2, identity W1, W2=[1,1], zero biases, token mean (0.5, -0.2):
  // relu -> (0.5, 0), score 0.5.
  HeadRig rig(2, 2);
  rig.store.at(rig.store.find("head.w1")).value = Matrix::Identity(2, 2);
  rig.store.at(rig.store.find("head.b1")).value = Matrix::Zero(1, 2);
  Matrix w2(2, 1);
  w2 << 1.0, 1.0;
  rig.store.at(rig.store.find("head.w2")).value = w2;
  rig.store.at(rig.store.find("head.b2")).value = Matrix::Zero(1, 1);

  Matrix u(1, 2), v(1, 2);
  u << 0.7, -0.4;  // token mean of [u; v] = (0.5, -0.2)
  v << 0.3, 0.0;
  Tape tape(rig.store);
  const Tensor s = rig.head->score_frame(tape, embedding(u, Segment::kHigh),
                                         embedding(v, Segment::kLow));
  EXPECT_NEAR(s.item(), 0.5, 1e-12);
}

TEST(QualityHead, ZeroFinalLayerGivesBias) {
  HeadRig rig(8, 8);
  rig.store.at(rig.store.find("head.w2")).value.setZero();
  rig.store.at(rig.store.find("head.b2")).value.setConstant(2.75);
  Tape tape(rig.store);
  const Tensor s = rig.head->score_frame(tape, random_embedding(4, 8, 1, Segment::kHigh),
                                         random_embedding(4, 8, 2, Segment::kLow));
  EXPECT_NEAR(s.item(), 2.75, 1e-12);
}

TEST(QualityHead, DeterministicAndSegmentChecked) {
  HeadRig rig(8, 8);
  const auto u = random_embedding(4, 8, 3, Segment::kHigh);
  const auto v = random_embedding(4, 8, 4, Segment::kLow);
  Tape t1(rig.store), t2(rig.store);
  EXPECT_EQ(rig.head->score_frame(t1, u, v).item(), rig.head->score_frame(t2, u, v).item());
  Tape t3(rig.store);
  EXPECT_THROW(rig.head->score_frame(t3, v, u), InputError);
}

TEST(QualityHead, VideoMeanAndPermutationInvariance) {
  HeadRig rig(8, 8);
  std::vector<std::pair<EmbeddingSequence, EmbeddingSequence>> pairs;
  for (int i = 0; i < 3; ++i) {
    pairs.emplace_back(random_embedding(4, 8, 10 + i, Segment::kHigh),
                       random_embedding(4, 8, 20 + i, Segment::kLow));
  }
  Tape tape(rig.store);
  double mean = 0.0;
  for (const auto& [u, v] : pairs) mean += rig.head->score_frame(tape, u, v).item();
  mean /= 3.0;
  EXPECT_NEAR(rig.head->score_video(tape, pairs).item(), mean, 1e-12);

  std::swap(pairs[0], pairs[2]);
  Tape t2(rig.store);
  EXPECT_NEAR(rig.head->score_video(t2, pairs).item(), mean, 1e-12);

  // M=1: video score equals the frame score.
  std::vector<std::pair<EmbeddingSequence, EmbeddingSequence>> one = {pairs[0]};
  Tape t3(rig.store);
  EXPECT_EQ(rig.head->score_video(t3, one).item(),
            rig.head->score_frame(t3, one[0].first, one[0].second).item());
}

TEST(QualityHead, QualityScoreAggregation) {
  const QualityScore a = QualityHead::to_quality_score({3.0, 3.0, 3.0});
  EXPECT_NEAR(a.value, 3.0, 1e-12);
  const QualityScore b = QualityHead::to_quality_score({1.0, 5.0});
  EXPECT_NEAR(b.value, 3.0, 1e-12);
  // Clamp applies per frame at report time only; raw stays raw.
  const QualityScore c = QualityHead::to_quality_score({6.0, 0.0});
  EXPECT_NEAR(c.value, 3.0, 1e-12);
  EXPECT_NEAR(c.raw, 3.0, 1e-12);
  const QualityScore d = QualityHead::to_quality_score({7.0});
  EXPECT_NEAR(d.value, 5.0, 1e-12);
  EXPECT_NEAR(d.raw, 7.0, 1e-12);
}

TEST(QualityHead, LipschitzPerturbation) {
  HeadRig rig(8, 8);
  const auto u = random_embedding(4, 8, 30, Segment::kHigh);
  const auto v = random_embedding(4, 8, 31, Segment::kLow);
  Tape t1(rig.store);
  const double base = rig.head->score_frame(t1, u, v).item();
  const double eps = 1e-4;
  Matrix up = u.tokens.value();
  up.array() += eps;
  Tape t2(rig.store);
  const double bumped =
      rig.head->score_frame(t2, embedding(up, Segment::kHigh), v).item();
  // O(eps) sensitivity for fixed weights.
  EXPECT_LE(std::abs(bumped - base), 100.0 * eps);
  EXPECT_GT(std::abs(bumped - base), 0.0);
}

TEST(QualityHead, GradientCheck) {
  HeadRig rig(8, 8, /*seed=*/41);
  const auto u = random_embedding(3, 8, 42, Segment::kHigh);
  const auto v = random_embedding(5, 8, 43, Segment::kLow);
  auto build = [&](Tape& tape) { return rig.head->score_frame(tape, u, v); };
  const auto result = vqlm::testing::finite_diff_check(rig.store, build);
  EXPECT_LE(result.max_rel_err, 1e-3) << "worst: " << result.worst_param;
}

}  // namespace
}  // namespace vqlm::quality
