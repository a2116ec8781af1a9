// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vqlm/config.h"
#include "vqlm/datagen.h"
#include "vqlm/model.h"
#include "vqlm/nn/adam.h"

namespace vqlm::training {

// ---- batch-level loss definitions (the reference surface) ----

struct RankSample {
  double q1_hat, q2_hat;  // predictions for the first/second video of a pair
  double q1, q2;          // ground truth (MOS or pseudo-MOS)
};
// Mean over the batch of max(0, -(q1-q2)(q1_hat-q2_hat) + margin).
double loss_rank(const std::vector<RankSample>& batch, double margin = 0.0);

struct MseSample {
  double q1_hat, q1;
  bool first_is_original;  // q1 in the MOS set M
};
// Sum of squared errors over original-first samples, divided by
// max(count, 1). Second videos never contribute.
double loss_mse(const std::vector<MseSample>& batch);

struct TextSample {
  std::vector<double> token_probs;  // predicted probability of each target token
};
// -(sum_i sum_k log p_hat) / sum_i O_i, log clamped at epsilon.
inline constexpr double kTextProbEpsilon = 1e-12;
double loss_text(const std::vector<TextSample>& batch, bool* clamped = nullptr);

double total_loss(double l1, double l2, double l3, double w1, double w2, double w3);

// ---- batch assembly ----

enum class PairKind { kPairwise, kSingle };

struct QualityPair {
  int record_a = -1;  // manifest record indices
  int record_b = -1;  // == record_a for SINGLE (duplicate-and-mask padding)
  double q_a = 0.0;
  double q_b = 0.0;
  bool a_is_original = false;
  std::vector<int> caption_target;  // first video's caption bytes + EOS
  PairKind kind = PairKind::kSingle;
};

// Per-split view of a manifest: ladder lookup per source.
struct DatasetIndex {
  struct Source {
    std::string id;
    int original = -1;                       // record index
    std::vector<int> variants_by_severity;   // record indices, ascending severity
  };
  std::vector<Source> sources;
  const datagen::DatasetManifest* manifest = nullptr;

  static DatasetIndex build(const datagen::DatasetManifest& manifest, const std::string& split);
  int record_count() const;
};

// fraction `mix` of the batch is PAIRWISE (same-source severity pairs, first
// slot randomized), the rest SINGLE (an original duplicated as masked
// padding). Seeded by the caller's RNG.
std::vector<QualityPair> assemble_batch(const DatasetIndex& index, int batch_size, double mix,
                                        std::mt19937_64& rng);

// ---- trainer ----

struct StepStats {
  int step = 0;
  double l1 = 0.0, l2 = 0.0, l3 = 0.0, total = 0.0;
  double lr = 0.0;
  bool text_clamped = false;
  bool non_finite = false;
  std::vector<std::string> offenders;  // sample ids behind a non-finite loss
};

// Marks parameters trainable per freeze modes / decoder mode. The quality
// head always trains.
void apply_trainability(nn::ParamStore& params, const TrainingConfig& cfg);

class Trainer {
 public:
  Trainer(Model& model, const AppConfig& cfg, const datagen::DatasetManifest& manifest);

  // One optimizer step over a freshly assembled batch. Skips the update and
  // flags non_finite when any sample loss is not finite.
  StepStats step();

  // Full loop with CSV logging; throws NumericError naming the step on a
  // non-finite loss.
  void train(const std::string& log_path = "");

  // Gradients for one externally supplied batch without applying an update;
  // used by gradient checks and masking tests.
  StepStats compute_gradients(const std::vector<QualityPair>& batch);

  int steps_done() const { return step_; }
  const DatasetIndex& train_index() const { return train_index_; }
  std::mt19937_64& rng() { return rng_; }

  // Raw score for an arbitrary record (bundles are cached).
  double score_record(int record_index);

 private:
  struct SampleLossResult {
    nn::Tensor loss;
    double hinge = 0.0, sq = 0.0, nll = 0.0;
    int n_text_tokens = 0;
    bool text_clamped = false;
  };
  SampleLossResult sample_loss(nn::Tape& tape, const QualityPair& sample, int batch_size,
                               int mse_denom, int text_denom);
  const media::FrameBundle& bundle_for(int record_index);

  Model* model_;
  AppConfig cfg_;
  const datagen::DatasetManifest* manifest_;
  DatasetIndex train_index_;
  nn::Adam adam_;
  std::mt19937_64 rng_;
  std::vector<int> prompt_ids_;
  std::vector<std::optional<media::FrameBundle>> bundles_;
  int step_ = 0;
};

}  // namespace vqlm::training
