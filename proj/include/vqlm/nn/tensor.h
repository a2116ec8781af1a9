// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

namespace vqlm::nn {

using Matrix = Eigen::MatrixXd;

// One node of a dynamically built computation graph. Edges point from result
// to operands; backward closures add into operand grads.
struct Node {
  Matrix value;
  Matrix grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  Matrix& ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
      grad = Matrix::Zero(value.rows(), value.cols());
    }
    return grad;
  }
};

// Value-semantics handle to a graph node. Cheap to copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor leaf(Matrix value, bool requires_grad);
  static Tensor scalar(double value);  // 1x1 constant

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& grad() const { return node_->ensure_grad(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;  // value of a 1x1 tensor

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// ---- graph-building operations ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);           // same shape
Tensor add_rowvec(const Tensor& a, const Tensor& row);  // broadcast 1xC over rows
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

// Row-wise softmax / log-softmax with max-subtraction.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

// y = (x - mean) / sqrt(var + eps) * gamma + beta, per row.
// gamma/beta are 1xC.
Tensor layer_norm_rows(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-6);

Tensor mean_rows(const Tensor& a);  // RxC -> 1xC
Tensor mean_all(const Tensor& a);   // -> 1x1
Tensor sum_all(const Tensor& a);    // -> 1x1

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index n);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index n);
Tensor concat_cols(const std::vector<Tensor>& parts);

// out.row(i) = table.row(ids[i]); repeated ids accumulate gradient.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// Sum over rows of -log_probs(r, ids[r]), each term capped at `cap`
// (capped terms carry zero gradient). Sets *clamped if any term hit the cap.
Tensor pick_nll(const Tensor& log_probs, const std::vector<int>& ids, double cap,
                bool* clamped = nullptr);

// Reverse-mode sweep from a 1x1 root. Intermediate grads live in the nodes.
void backward(const Tensor& root);

}  // namespace vqlm::nn
