// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/nn/adam.h"

#include <cmath>

namespace vqlm::nn {

void Adam::step(ParamStore& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (int i = 0; i < params.size(); ++i) {
      const Param& p = params.at(i);
      m_[i] = Matrix::Zero(p.value.rows(), p.value.cols());
      v_[i] = Matrix::Zero(p.value.rows(), p.value.cols());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (int i = 0; i < params.size(); ++i) {
    Param& p = params.at(i);
    if (!p.trainable) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    const Matrix mhat = m_[i] / bc1;
    const Matrix vhat = v_[i] / bc2;
    p.value.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

}  // namespace vqlm::nn
