// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/nn/tensor.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "vqlm/errors.h"

namespace vqlm::nn {

namespace {

std::shared_ptr<Node> make_node(Matrix value, std::vector<std::shared_ptr<Node>> parents) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->parents = std::move(parents);
  for (const auto& p : node->parents) {
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  return node;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InputError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = false;
  return Tensor(node);
}

Tensor Tensor::leaf(Matrix value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw InputError("item(): tensor is not 1x1");
  return node_->value(0, 0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw InputError("matmul: inner dims differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  auto node = make_node(a.value() * b.value(), {a.node(), b.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    auto out = node.get();
    node->backward_fn = [an, bn, out]() {
      if (an->requires_grad) an->ensure_grad().noalias() += out->grad * bn->value.transpose();
      if (bn->requires_grad) bn->ensure_grad().noalias() += an->value.transpose() * out->grad;
    };
  }
  return Tensor(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto node = make_node(a.value() + b.value(), {a.node(), b.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    auto out = node.get();
    node->backward_fn = [an, bn, out]() {
      if (an->requires_grad) an->ensure_grad() += out->grad;
      if (bn->requires_grad) bn->ensure_grad() += out->grad;
    };
  }
  return Tensor(node);
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw InputError("add_rowvec: row must be 1x" + std::to_string(a.cols()));
  }
  Matrix v = a.value();
  v.rowwise() += Eigen::RowVectorXd(row.value().row(0));
  auto node = make_node(std::move(v), {a.node(), row.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto rn = row.node();
    auto out = node.get();
    node->backward_fn = [an, rn, out]() {
      if (an->requires_grad) an->ensure_grad() += out->grad;
      if (rn->requires_grad) rn->ensure_grad() += out->grad.colwise().sum();
    };
  }
  return Tensor(node);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto node = make_node(a.value() - b.value(), {a.node(), b.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    auto out = node.get();
    node->backward_fn = [an, bn, out]() {
      if (an->requires_grad) an->ensure_grad() += out->grad;
      if (bn->requires_grad) bn->ensure_grad() -= out->grad;
    };
  }
  return Tensor(node);
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "hadamard");
  auto node = make_node(a.value().cwiseProduct(b.value()), {a.node(), b.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    auto out = node.get();
    node->backward_fn = [an, bn, out]() {
      if (an->requires_grad) an->ensure_grad() += out->grad.cwiseProduct(bn->value);
      if (bn->requires_grad) bn->ensure_grad() += out->grad.cwiseProduct(an->value);
    };
  }
  return Tensor(node);
}

Tensor scale(const Tensor& a, double s) {
  auto node = make_node(a.value() * s, {a.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto out = node.get();
    node->backward_fn = [an, out, s]() {
      if (an->requires_grad) an->ensure_grad() += out->grad * s;
    };
  }
  return Tensor(node);
}

Tensor transpose(const Tensor& a) {
  auto node = make_node(a.value().transpose(), {a.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto out = node.get();
    node->backward_fn = [an, out]() {
      if (an->requires_grad) an->ensure_grad() += out->grad.transpose();
    };
  }
  return Tensor(node);
}

Tensor relu(const Tensor& a) {
  auto node = make_node(a.value().cwiseMax(0.0), {a.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto out = node.get();
    node->backward_fn = [an, out]() {
      if (!an->requires_grad) return;
      an->ensure_grad() +=
          out->grad.cwiseProduct((an->value.array() > 0.0).cast<double>().matrix());
    };
  }
  return Tensor(node);
}

Tensor square(const Tensor& a) { return hadamard(a, a); }

Tensor softmax_rows(const Tensor& a) {
  Matrix p = a.value();
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double mx = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  auto node = make_node(std::move(p), {a.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto out = node.get();
    node->backward_fn = [an, out]() {
      if (!an->requires_grad) return;
      const Matrix& p = out->value;
      const Matrix& dp = out->grad;
      Eigen::VectorXd rowdot = (dp.cwiseProduct(p)).rowwise().sum();
      an->ensure_grad() += p.cwiseProduct(dp - rowdot.replicate(1, p.cols()));
    };
  }
  return Tensor(node);
}

Tensor log_softmax_rows(const Tensor& a) {
  Matrix y = a.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double mx = y.row(r).maxCoeff();
    const double lse = mx + std::log((y.row(r).array() - mx).exp().sum());
    y.row(r).array() -= lse;
  }
  auto node = make_node(std::move(y), {a.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto out = node.get();
    node->backward_fn = [an, out]() {
      if (!an->requires_grad) return;
      const Matrix& y = out->value;
      const Matrix& dy = out->grad;
      Eigen::VectorXd rowsum = dy.rowwise().sum();
      an->ensure_grad() +=
          dy - y.array().exp().matrix().cwiseProduct(rowsum.replicate(1, y.cols()));
    };
  }
  return Tensor(node);
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  if (gamma.rows() != 1 || gamma.cols() != a.cols() || beta.rows() != 1 ||
      beta.cols() != a.cols()) {
    throw InputError("layer_norm_rows: gamma/beta must be 1x" + std::to_string(a.cols()));
  }
  const Eigen::Index n = a.cols();
  Matrix xhat(a.rows(), n);
  Eigen::VectorXd inv_std(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double mu = a.value().row(r).mean();
    const double var = (a.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (a.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix y = xhat;
  y.array().rowwise() *= gamma.value().row(0).array();
  y.array().rowwise() += beta.value().row(0).array();
  auto node = make_node(std::move(y), {a.node(), gamma.node(), beta.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    auto out = node.get();
    node->backward_fn = [an, gn, bn, out, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)]() {
      const Matrix& dy = out->grad;
      if (gn->requires_grad) gn->ensure_grad() += dy.cwiseProduct(xhat).colwise().sum();
      if (bn->requires_grad) bn->ensure_grad() += dy.colwise().sum();
      if (an->requires_grad) {
        Matrix dxhat = dy;
        dxhat.array().rowwise() *= gn->value.row(0).array();
        Matrix& da = an->ensure_grad();
        for (Eigen::Index r = 0; r < dy.rows(); ++r) {
          const double m1 = dxhat.row(r).mean();
          const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
          da.row(r) +=
              inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
        }
      }
    };
  }
  return Tensor(node);
}

Tensor mean_rows(const Tensor& a) {
  Matrix v = a.value().colwise().mean();
  auto node = make_node(std::move(v), {a.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto out = node.get();
    node->backward_fn = [an, out]() {
      if (!an->requires_grad) return;
      const double inv = 1.0 / static_cast<double>(an->value.rows());
      an->ensure_grad() += (out->grad * inv).replicate(an->value.rows(), 1);
    };
  }
  return Tensor(node);
}

Tensor mean_all(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().mean();
  auto node = make_node(std::move(v), {a.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto out = node.get();
    node->backward_fn = [an, out]() {
      if (!an->requires_grad) return;
      const double g = out->grad(0, 0) / static_cast<double>(an->value.size());
      an->ensure_grad().array() += g;
    };
  }
  return Tensor(node);
}

Tensor sum_all(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  auto node = make_node(std::move(v), {a.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto out = node.get();
    node->backward_fn = [an, out]() {
      if (an->requires_grad) an->ensure_grad().array() += out->grad(0, 0);
    };
  }
  return Tensor(node);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InputError("concat_rows: no parts");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw InputError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  std::vector<std::shared_ptr<Node>> parents;
  parents.reserve(parts.size());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    parents.push_back(p.node());
  }
  auto node = make_node(std::move(v), std::move(parents));
  if (node->requires_grad) {
    auto out = node.get();
    auto parent_nodes = node->parents;  // copy for capture
    node->backward_fn = [out, parent_nodes]() {
      Eigen::Index at = 0;
      for (const auto& p : parent_nodes) {
        if (p->requires_grad) {
          p->ensure_grad() += out->grad.middleRows(at, p->value.rows());
        }
        at += p->value.rows();
      }
    };
  }
  return Tensor(node);
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.rows()) throw InputError("slice_rows: out of range");
  auto node = make_node(a.value().middleRows(start, n), {a.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto out = node.get();
    node->backward_fn = [an, out, start, n]() {
      if (an->requires_grad) an->ensure_grad().middleRows(start, n) += out->grad;
    };
  }
  return Tensor(node);
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols()) throw InputError("slice_cols: out of range");
  auto node = make_node(a.value().middleCols(start, n), {a.node()});
  if (node->requires_grad) {
    auto an = a.node();
    auto out = node.get();
    node->backward_fn = [an, out, start, n]() {
      if (an->requires_grad) an->ensure_grad().middleCols(start, n) += out->grad;
    };
  }
  return Tensor(node);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InputError("concat_cols: no parts");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw InputError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  std::vector<std::shared_ptr<Node>> parents;
  parents.reserve(parts.size());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    parents.push_back(p.node());
  }
  auto node = make_node(std::move(v), std::move(parents));
  if (node->requires_grad) {
    auto out = node.get();
    auto parent_nodes = node->parents;
    node->backward_fn = [out, parent_nodes]() {
      Eigen::Index at = 0;
      for (const auto& p : parent_nodes) {
        if (p->requires_grad) {
          p->ensure_grad() += out->grad.middleCols(at, p->value.cols());
        }
        at += p->value.cols();
      }
    };
  }
  return Tensor(node);
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw InputError("gather_rows: id " + std::to_string(ids[i]) + " out of range [0, " +
                       std::to_string(table.rows()) + ")");
    }
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  auto node = make_node(std::move(v), {table.node()});
  if (node->requires_grad) {
    auto tn = table.node();
    auto out = node.get();
    node->backward_fn = [tn, out, ids]() {
      if (!tn->requires_grad) return;
      Matrix& g = tn->ensure_grad();
      for (size_t i = 0; i < ids.size(); ++i) {
        g.row(ids[i]) += out->grad.row(static_cast<Eigen::Index>(i));
      }
    };
  }
  return Tensor(node);
}

Tensor pick_nll(const Tensor& log_probs, const std::vector<int>& ids, double cap, bool* clamped) {
  if (static_cast<Eigen::Index>(ids.size()) != log_probs.rows()) {
    throw InputError("pick_nll: one id per row required");
  }
  double total = 0.0;
  std::vector<bool> capped(ids.size(), false);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= log_probs.cols()) throw InputError("pick_nll: id out of range");
    const double nll = -log_probs.value()(static_cast<Eigen::Index>(i), ids[i]);
    if (nll > cap) {
      capped[i] = true;
      total += cap;
      if (clamped) *clamped = true;
    } else {
      total += nll;
    }
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  auto node = make_node(std::move(v), {log_probs.node()});
  if (node->requires_grad) {
    auto ln = log_probs.node();
    auto out = node.get();
    node->backward_fn = [ln, out, ids, capped = std::move(capped)]() {
      if (!ln->requires_grad) return;
      const double g = out->grad(0, 0);
      Matrix& dst = ln->ensure_grad();
      for (size_t i = 0; i < ids.size(); ++i) {
        if (!capped[i]) dst(static_cast<Eigen::Index>(i), ids[i]) -= g;
      }
    };
  }
  return Tensor(node);
}

void backward(const Tensor& root) {
  if (!root.defined() || root.rows() != 1 || root.cols() != 1) {
    throw InputError("backward: root must be a defined 1x1 tensor");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order topological sort.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad()(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();  // zero-init if untouched (dead branch)
      n->backward_fn();
    }
  }
}

}  // namespace vqlm::nn
