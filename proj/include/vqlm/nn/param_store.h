// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "vqlm/nn/tensor.h"

namespace vqlm::nn {

// Trainability groups; the trainer maps freeze modes onto these.
enum class ParamGroup {
  kEncoderHighBackbone,
  kEncoderHighProj,
  kEncoderLowBackbone,
  kEncoderLowProj,
  kDecoderBase,
  kDecoderLora,
  kQualityHead,
};

struct Param {
  std::string name;
  ParamGroup group;
  Matrix value;
  Matrix grad;  // accumulated by the trainer, zeroed per step
  bool trainable = true;
};

// Flat, registration-ordered parameter set. Registration order is the
// serialization order, so checkpoints are byte-stable.
class ParamStore {
 public:
  int add(const std::string& name, Eigen::Index rows, Eigen::Index cols, ParamGroup group);

  Param& at(int id) { return params_[static_cast<size_t>(id)]; }
  const Param& at(int id) const { return params_[static_cast<size_t>(id)]; }
  int find(const std::string& name) const;  // -1 when absent
  int size() const { return static_cast<int>(params_.size()); }

  void zero_grads();
  int64_t count_values() const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> by_name_;
};

// Deterministic gaussian init helpers (one RNG threaded through model
// construction keeps init a pure function of the seed).
void init_normal(Matrix& m, std::mt19937_64& rng, double stddev);
void init_zero(Matrix& m);
void init_const(Matrix& m, double v);

// Per-forward graph context: hands out leaf tensors backed by copies of the
// parameter values. Leaf grads accumulate across every sample built on this
// tape; collect() moves them into a dense per-param sink.
class Tape {
 public:
  explicit Tape(const ParamStore& store) : store_(&store), leaves_(store.size()) {}

  Tensor param(int id);

  // sink[id] += leaf grad, for every leaf this tape handed out.
  void collect(std::vector<Matrix>& sink) const;

  const ParamStore& store() const { return *store_; }

 private:
  const ParamStore* store_;
  std::vector<Tensor> leaves_;
};

}  // namespace vqlm::nn
