// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <map>
#include <string>
#include <vector>

#include "vqlm/config.h"
#include "vqlm/datagen.h"
#include "vqlm/model.h"

namespace vqlm::eval {

// Spearman rank correlation with average ranks for ties. Throws InputError
// on constant input or length < 2.
double srcc(const std::vector<double>& pred, const std::vector<double>& gt);

// Pearson correlation on raw scores (no logistic remapping by default).
double plcc(const std::vector<double>& pred, const std::vector<double>& gt);

// Average (fractional) ranks, exposed for reuse and testing.
std::vector<double> average_ranks(const std::vector<double>& v);

// Monotone 4-parameter logistic remap fitted by least squares; optional
// pre-step before PLCC for comparability with other published setups.
std::vector<double> logistic_fit(const std::vector<double>& pred, const std::vector<double>& gt);

// Each pair is (score of the lower-severity variant, score of the
// higher-severity variant). Ties count as flips when ties_as_flips.
double flip_rate(const std::vector<std::pair<double, double>>& scored_pairs,
                 bool ties_as_flips = true);

// All intra-source, same-kind variant pairs with severity difference exactly
// d, as (lower-severity record index, higher-severity record index).
using DiffPairs = std::map<int, std::vector<std::pair<size_t, size_t>>>;
DiffPairs build_diff_pairs(const datagen::DatasetManifest& manifest,
                           const std::vector<size_t>& record_indices,
                           const std::vector<int>& diffs);

struct EvalReport {
  std::string dataset_id;
  double srcc = 0.0;
  double plcc = 0.0;
  std::string srcc_error;  // non-empty when undefined (constant input)
  std::string plcc_error;
  std::map<int, double> fr_by_diff;
  std::map<int, int> pairs_by_diff;
  int n_items = 0;
  int n_pairs = 0;
  int n_skipped = 0;  // unreadable media files
};

struct BenchmarkOptions {
  EvalConfig eval;
  std::string split = "test";  // "train" | "test" | "all"
  std::string out_dir;         // report + plots land here when non-empty
  std::string dataset_id = "synthetic";
};

// Metric assembly over already-computed raw scores (record index -> score);
// run_benchmark delegates here after scoring.
EvalReport compute_report(const datagen::DatasetManifest& manifest,
                          const std::map<size_t, double>& scores, const EvalConfig& eval_cfg,
                          const std::string& dataset_id);

// Scores every item once (raw, uncalibrated scores), computes SRCC/PLCC
// against the manifest MOS column and flip rate per severity-difference
// bucket; optionally writes report.txt plus SVG plots.
EvalReport run_benchmark(const Model& model, const datagen::DatasetManifest& manifest,
                         const BenchmarkOptions& options);

std::string format_report(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& path);

}  // namespace vqlm::eval
