// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include "vqlm/nn/param_store.h"

namespace vqlm::nn {

// Adam with bias correction. Only trainable parameters are touched; frozen
// ones stay bit-identical.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  int t() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace vqlm::nn
