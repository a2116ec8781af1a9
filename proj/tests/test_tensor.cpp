// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/nn/tensor.h"

#include <gtest/gtest.h>

#include <random>

#include "test_support.h"
#include "vqlm/errors.h"
#include "vqlm/nn/param_store.h"

namespace vqlm::nn {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = dist(rng);
  }
  return m;
}

// Gradient check for a unary/binary op over dedicated parameters.
void check_op(const std::function<Tensor(Tape&, std::vector<Tensor>&)>& op,
              const std::vector<std::pair<Eigen::Index, Eigen::Index>>& shapes,
              uint64_t seed = 42) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  for (size_t i = 0; i < shapes.size(); ++i) {
    const int id = store.add("p" + std::to_string(i), shapes[i].first, shapes[i].second,
                             ParamGroup::kQualityHead);
    store.at(id).value = random_matrix(shapes[i].first, shapes[i].second, rng);
  }
  // Fix the readout weights on the first evaluation so repeated evaluations
  // are consistent.
  std::mt19937_64 readout_rng(seed + 1);
  std::vector<Matrix> fixed;
  auto build = [&](Tape& tape) {
    std::vector<Tensor> params;
    for (int i = 0; i < store.size(); ++i) params.push_back(tape.param(i));
    Tensor out = op(tape, params);
    if (fixed.empty()) fixed.push_back(random_matrix(out.rows(), out.cols(), readout_rng));
    return sum_all(hadamard(out, Tensor::constant(fixed[0])));
  };
  const auto result = vqlm::testing::finite_diff_check(store, build);
  EXPECT_LE(result.max_rel_err, 1e-7) << "worst param: " << result.worst_param;
}

TEST(TensorOps, MatmulValue) {
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(3, 4, rng);
  const Matrix b = random_matrix(4, 2, rng);
  const Tensor c = matmul(Tensor::constant(a), Tensor::constant(b));
  EXPECT_TRUE(c.value().isApprox(a * b));
  EXPECT_THROW(matmul(Tensor::constant(a), Tensor::constant(a)), InputError);
}

TEST(TensorOps, MatmulGrad) {
  check_op([](Tape&, std::vector<Tensor>& p) { return matmul(p[0], p[1]); },
           {{3, 5}, {5, 4}});
}

TEST(TensorOps, AddSubHadamardGrad) {
  check_op([](Tape&, std::vector<Tensor>& p) { return hadamard(sub(add(p[0], p[1]), p[2]), p[3]); },
           {{4, 3}, {4, 3}, {4, 3}, {4, 3}});
}

TEST(TensorOps, AddRowvecGrad) {
  check_op([](Tape&, std::vector<Tensor>& p) { return add_rowvec(p[0], p[1]); },
           {{5, 3}, {1, 3}});
}

TEST(TensorOps, ScaleTransposeGrad) {
  check_op([](Tape&, std::vector<Tensor>& p) { return transpose(scale(p[0], -1.7)); }, {{4, 6}});
}

TEST(TensorOps, ReluGrad) {
  check_op([](Tape&, std::vector<Tensor>& p) { return relu(p[0]); }, {{6, 6}}, /*seed=*/3);
}

TEST(TensorOps, SoftmaxRowsValueAndGrad) {
  std::mt19937_64 rng(2);
  const Matrix a = random_matrix(4, 7, rng, 2.0);
  const Tensor s = softmax_rows(Tensor::constant(a));
  for (Eigen::Index r = 0; r < 4; ++r) {
    EXPECT_NEAR(s.value().row(r).sum(), 1.0, 1e-12);
    EXPECT_GE(s.value().row(r).minCoeff(), 0.0);
  }
  check_op([](Tape&, std::vector<Tensor>& p) { return softmax_rows(p[0]); }, {{4, 7}});
}

TEST(TensorOps, LogSoftmaxGrad) {
  check_op([](Tape&, std::vector<Tensor>& p) { return log_softmax_rows(p[0]); }, {{3, 9}});
}

TEST(TensorOps, LayerNormValueAndGrad) {
  std::mt19937_64 rng(4);
  const Matrix a = random_matrix(5, 8, rng, 3.0);
  const Tensor y = layer_norm_rows(Tensor::constant(a),
                                   Tensor::constant(Matrix::Ones(1, 8)),
                                   Tensor::constant(Matrix::Zero(1, 8)));
  for (Eigen::Index r = 0; r < 5; ++r) {
    EXPECT_NEAR(y.value().row(r).mean(), 0.0, 1e-10);
    const double var = (y.value().row(r).array() - y.value().row(r).mean()).square().mean();
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
  check_op(
      [](Tape&, std::vector<Tensor>& p) { return layer_norm_rows(p[0], p[1], p[2]); },
      {{5, 8}, {1, 8}, {1, 8}});
}

TEST(TensorOps, ReductionsGrad) {
  check_op([](Tape&, std::vector<Tensor>& p) { return mean_rows(p[0]); }, {{6, 4}});
  check_op([](Tape&, std::vector<Tensor>& p) { return mean_all(p[0]); }, {{3, 4}});
  check_op([](Tape&, std::vector<Tensor>& p) { return sum_all(square(p[0])); }, {{3, 4}});
}

TEST(TensorOps, ConcatSliceGrad) {
  check_op(
      [](Tape&, std::vector<Tensor>& p) {
        const Tensor cat = concat_rows({p[0], p[1]});
        return slice_rows(cat, 1, 4);
      },
      {{3, 4}, {3, 4}});
  check_op(
      [](Tape&, std::vector<Tensor>& p) {
        const Tensor cat = concat_cols({p[0], p[1]});
        return slice_cols(cat, 2, 3);
      },
      {{3, 4}, {3, 2}});
}

TEST(TensorOps, GatherRowsGradAccumulatesRepeats) {
  std::mt19937_64 rng(6);
  ParamStore store;
  const int id = store.add("table", 5, 3, ParamGroup::kQualityHead);
  store.at(id).value = random_matrix(5, 3, rng);
  const std::vector<int> ids = {0, 2, 2, 4, 0, 2};
  std::vector<Matrix> fixed;
  std::mt19937_64 readout_rng(7);
  auto build = [&](Tape& tape) {
    const Tensor g = gather_rows(tape.param(id), ids);
    if (fixed.empty()) fixed.push_back(random_matrix(g.rows(), g.cols(), readout_rng));
    return sum_all(hadamard(g, Tensor::constant(fixed[0])));
  };
  const auto result = vqlm::testing::finite_diff_check(store, build);
  EXPECT_LE(result.max_rel_err, 1e-7);
  EXPECT_THROW(gather_rows(Tensor::constant(Matrix::Zero(5, 3)), {5}), InputError);
}

TEST(TensorOps, PickNllValueAndClamp) {
  Matrix logp(2, 3);
  logp << -1.0, -2.0, -3.0, -50.0, -0.5, -0.1;
  bool clamped = false;
  const Tensor nll = pick_nll(Tensor::constant(logp), {0, 1}, 27.0, &clamped);
  EXPECT_NEAR(nll.item(), 1.0 + 0.5, 1e-12);
  EXPECT_FALSE(clamped);
  const Tensor capped = pick_nll(Tensor::constant(logp), {0, 0}, 27.0, &clamped);
  EXPECT_NEAR(capped.item(), 1.0 + 27.0, 1e-12);
  EXPECT_TRUE(clamped);
}

TEST(TensorOps, PickNllGrad) {
  std::mt19937_64 rng(8);
  ParamStore store;
  const int id = store.add("logits", 4, 6, ParamGroup::kQualityHead);
  store.at(id).value = random_matrix(4, 6, rng);
  const std::vector<int> ids = {1, 3, 0, 5};
  auto build = [&](Tape& tape) {
    return pick_nll(log_softmax_rows(tape.param(id)), ids, 1e9);
  };
  const auto result = vqlm::testing::finite_diff_check(store, build);
  EXPECT_LE(result.max_rel_err, 1e-7);
}

TEST(TensorOps, SharedSubexpressionAccumulates) {
  // y = x ∘ x + x: dy/dx = 2x + 1
  ParamStore store;
  const int id = store.add("x", 2, 2, ParamGroup::kQualityHead);
  store.at(id).value << 1.0, -2.0, 0.5, 3.0;
  vqlm::testing::forward_with_grads(store, [&](Tape& tape) {
    const Tensor x = tape.param(id);
    return sum_all(add(hadamard(x, x), x));
  });
  const Matrix expected = (2.0 * store.at(id).value).array() + 1.0;
  EXPECT_TRUE(store.at(id).grad.isApprox(expected, 1e-12));
}

TEST(TensorOps, BackwardRequiresScalarRoot) {
  const Tensor t = Tensor::leaf(Matrix::Zero(2, 2), true);
  EXPECT_THROW(backward(t), InputError);
}

TEST(TensorOps, ConstantsReceiveNoGrad) {
  ParamStore store;
  const int id = store.add("x", 2, 2, ParamGroup::kQualityHead);
  store.at(id).value = Matrix::Ones(2, 2);
  Tape tape(store);
  const Tensor c = Tensor::constant(Matrix::Ones(2, 2) * 3.0);
  const Tensor loss = sum_all(hadamard(tape.param(id), c));
  backward(loss);
  EXPECT_FALSE(c.requires_grad());
  EXPECT_EQ(c.node()->grad.size(), 0);
}

}  // namespace
}  // namespace vqlm::nn
