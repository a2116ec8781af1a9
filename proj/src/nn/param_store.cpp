// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/nn/param_store.h"

#include "vqlm/errors.h"

namespace vqlm::nn {

int ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                    ParamGroup group) {
  if (by_name_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  Param p;
  p.name = name;
  p.group = group;
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  const int id = static_cast<int>(params_.size());
  params_.push_back(std::move(p));
  by_name_[name] = id;
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.grad.setZero();
}

int64_t ParamStore::count_values() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void init_normal(Matrix& m, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m(r, c) = dist(rng);
    }
  }
}

void init_zero(Matrix& m) { m.setZero(); }

void init_const(Matrix& m, double v) { m.setConstant(v); }

Tensor Tape::param(int id) {
  Tensor& leaf = leaves_[static_cast<size_t>(id)];
  if (!leaf.defined()) {
    const Param& p = store_->at(id);
    leaf = Tensor::leaf(p.value, p.trainable);
  }
  return leaf;
}

void Tape::collect(std::vector<Matrix>& sink) const {
  if (sink.size() != leaves_.size()) throw InputError("Tape::collect: sink size mismatch");
  for (size_t i = 0; i < leaves_.size(); ++i) {
    const Tensor& leaf = leaves_[i];
    if (!leaf.defined() || !leaf.requires_grad()) continue;
    if (leaf.node()->grad.size() == 0) continue;  // never reached by backward
    if (sink[i].size() == 0) {
      sink[i] = leaf.node()->grad;
    } else {
      sink[i] += leaf.node()->grad;
    }
  }
}

}  // namespace vqlm::nn
